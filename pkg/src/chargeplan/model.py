"""Problem data types, the objective evaluator, and feasibility checking.

An :class:`Instance` bundles demand points (Poisson charging-demand rates at
terminal stops), candidate stations, a charger-type catalog, and a sparse
travel-time matrix restricted to reachable (demand, station) pairs. It is
immutable after construction and safe to share read-only across concurrent
solver runs.

All money is normalized to currency per minute and all times to minutes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from . import geo, queueing
from .errors import (
    InfeasibleDemandError,
    InvalidSOCError,
    UnassignedDemandError,
    UnstableQueueError,
)

MINUTES_PER_YEAR = 525_960.0  # 365.25 days

_WAIT_TOL = 1e-9
_TRAVEL_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ChargerType:
    """One charger model: power draw, amortized cost, and service speed.

    ``service_rate`` is the reciprocal of ``recharge_time_min`` by
    construction; the recharge time is the stored quantity.
    """

    id: int
    power_kw: float
    unit_cost_rate: float
    recharge_time_min: float

    def __post_init__(self) -> None:
        if self.power_kw <= 0:
            raise ValueError("power_kw must be positive")
        if self.recharge_time_min <= 0:
            raise ValueError("recharge_time_min must be positive")
        if self.unit_cost_rate < 0:
            raise ValueError("unit_cost_rate must be nonnegative")

    @property
    def service_rate(self) -> float:
        """Vehicles served per minute by one charger of this type."""
        return 1.0 / self.recharge_time_min


def derive_service_rates(
    battery_kwh: float,
    soc_start_pct: float,
    soc_end_pct: float,
    charger_types: Iterable[ChargerType],
) -> tuple[ChargerType, ...]:
    """Recompute recharge times from battery size and the SOC window.

    A vehicle arrives at ``soc_start_pct`` and leaves at ``soc_end_pct``
    (percent of capacity); charging power is constant inside that window, so

        recharge minutes = 60 * battery_kwh * (end - start)/100 / power_kw.
    """
    if not (0.0 <= soc_start_pct < soc_end_pct <= 100.0):
        raise InvalidSOCError(
            f"need 0 <= start < end <= 100, got {soc_start_pct}..{soc_end_pct}"
        )
    if battery_kwh <= 0:
        raise ValueError("battery_kwh must be positive")
    energy_kwh = battery_kwh * (soc_end_pct - soc_start_pct) / 100.0
    return tuple(
        replace(ct, recharge_time_min=60.0 * energy_kwh / ct.power_kw)
        for ct in charger_types
    )


@dataclass(frozen=True)
class DemandPoint:
    """Aggregated charging demand at one terminal stop."""

    id: int
    lat: float
    lon: float
    rate: float  # vehicles per minute (Poisson)
    reachable: tuple[int, ...] = ()  # station ids within the travel cutoff
    agency: str | None = None

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError(f"demand point {self.id}: rate must be positive")


@dataclass(frozen=True)
class CandidateStation:
    """A location that may host chargers, with per-type capacity limits."""

    id: int
    lat: float
    lon: float
    fixed_cost_rate: float  # currency per minute while active
    max_chargers: Mapping[int, int] = field(default_factory=dict)  # type id -> cap
    is_garage: bool = False
    agency: str | None = None
    served: tuple[int, ...] = ()  # demand ids that can reach this station
    source_id: str | None = None  # ingest-only: the stop id in the source feed

    def __post_init__(self) -> None:
        if self.fixed_cost_rate < 0:
            raise ValueError(f"station {self.id}: fixed_cost_rate must be nonnegative")
        for k, cap in self.max_chargers.items():
            if cap < 0:
                raise ValueError(f"station {self.id}: negative cap for type {k}")


@dataclass(frozen=True)
class Instance:
    """Immutable problem data. Build through :func:`make_instance` so the
    reachability sets and travel matrix stay mutually consistent."""

    demand_points: tuple[DemandPoint, ...]
    stations: tuple[CandidateStation, ...]
    charger_types: tuple[ChargerType, ...]
    travel: Mapping[tuple[int, int], float]  # (demand id, station id) -> minutes
    travel_cost_rate: float
    wait_cost_rate: float
    epsilon: float = 1e-6
    enforce_proximity: bool = False
    speed_kmh: float = 30.0
    max_travel_minutes: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        for pair, t in self.travel.items():
            if t < 0 or not math.isfinite(t):
                raise ValueError(f"travel time for {pair} must be finite and >= 0")
        object.__setattr__(self, "demand_by_id", {d.id: d for d in self.demand_points})
        object.__setattr__(self, "station_by_id", {s.id: s for s in self.stations})
        object.__setattr__(self, "type_by_id", {k.id: k for k in self.charger_types})

    # filled in __post_init__
    demand_by_id: Mapping[int, DemandPoint] = field(init=False, repr=False, compare=False)
    station_by_id: Mapping[int, CandidateStation] = field(init=False, repr=False, compare=False)
    type_by_id: Mapping[int, ChargerType] = field(init=False, repr=False, compare=False)

    def station_cap(self, station_id: int, type_id: int) -> int:
        return self.station_by_id[station_id].max_chargers.get(type_id, 0)


def make_instance(
    demand_points: Iterable[DemandPoint],
    stations: Iterable[CandidateStation],
    charger_types: Iterable[ChargerType],
    *,
    travel_cost_rate: float,
    wait_cost_rate: float,
    travel: Mapping[tuple[int, int], float] | None = None,
    speed_kmh: float = 30.0,
    max_travel_minutes: float | None = None,
    epsilon: float = 1e-6,
    enforce_proximity: bool = False,
) -> Instance:
    """Assemble an instance, deriving travel times and reachability.

    When ``travel`` is omitted, times come from the haversine distance at a
    constant ``speed_kmh``; pairs beyond ``max_travel_minutes`` (when given)
    are dropped. Reachable/served sets are rebuilt from the surviving pairs
    so they are exact inverses of each other by construction.
    """
    dps = list(demand_points)
    sts = list(stations)
    kinds = tuple(charger_types)

    if travel is None:
        travel = {}
        for d in dps:
            for s in sts:
                t = geo.travel_minutes(d.lat, d.lon, s.lat, s.lon, speed_kmh)
                if max_travel_minutes is None or t <= max_travel_minutes:
                    travel[(d.id, s.id)] = t
    else:
        travel = dict(travel)

    reach: dict[int, list[int]] = {d.id: [] for d in dps}
    served: dict[int, list[int]] = {s.id: [] for s in sts}
    for (i, j) in sorted(travel):
        reach[i].append(j)
        served[j].append(i)

    uncovered = [d.id for d in dps if not reach[d.id]]
    if uncovered:
        raise InfeasibleDemandError(uncovered)

    dps = [replace(d, reachable=tuple(reach[d.id])) for d in dps]
    sts = [replace(s, served=tuple(served[s.id])) for s in sts]
    return Instance(
        demand_points=tuple(dps),
        stations=tuple(sts),
        charger_types=kinds,
        travel=travel,
        travel_cost_rate=travel_cost_rate,
        wait_cost_rate=wait_cost_rate,
        epsilon=epsilon,
        enforce_proximity=enforce_proximity,
        speed_kmh=speed_kmh,
        max_travel_minutes=max_travel_minutes,
    )


@dataclass(frozen=True)
class CostBreakdown:
    """Per-minute cost totals plus the per-assignment ledger."""

    station: float
    charger: float
    travel: float
    waiting: float
    total: float
    per_assignment: Mapping[tuple[int, int, int], float]


@dataclass(frozen=True)
class Solution:
    """A candidate deployment: activations, assignments, charger counts.

    ``waits`` holds the exact steady-state expected wait (queueing plus one
    service) for every equipped (station, type) pair.
    """

    active: frozenset[int]
    assignments: frozenset[tuple[int, int, int]]  # (demand, station, type)
    chargers: Mapping[tuple[int, int], int]
    waits: Mapping[tuple[int, int], float] = field(default_factory=dict)
    cost: CostBreakdown | None = None


def pair_loads(instance: Instance, assignments: Iterable[tuple[int, int, int]]) -> dict[tuple[int, int], float]:
    """Arrival rate routed to each (station, type) pair, summed in id order."""
    lam = instance.demand_by_id
    loads: dict[tuple[int, int], float] = {}
    for (i, j, k) in sorted(assignments):
        loads[(j, k)] = loads.get((j, k), 0.0) + lam[i].rate
    return loads


def compute_waits(
    instance: Instance,
    assignments: Iterable[tuple[int, int, int]],
    chargers: Mapping[tuple[int, int], int],
) -> dict[tuple[int, int], float]:
    """Exact expected waits for every equipped pair.

    Raises :class:`UnstableQueueError` whenever routed load reaches the
    stability margin ``mu * s * (1 - epsilon)`` of a pair, including pairs
    that received traffic but no chargers.
    """
    loads = pair_loads(instance, assignments)
    waits: dict[tuple[int, int], float] = {}
    keys = sorted(set(loads) | {k for k, s in chargers.items() if s > 0})
    for (j, k) in keys:
        s = chargers.get((j, k), 0)
        lam = loads.get((j, k), 0.0)
        mu = instance.type_by_id[k].service_rate
        if lam > mu * s * (1.0 - instance.epsilon):
            raise UnstableQueueError(
                f"station {j} type {k}: load {lam:.6g} exceeds capacity of {s} chargers"
            )
        if s > 0:
            waits[(j, k)] = queueing.expected_wait(
                queueing.QueueModel(arrival_rate=lam, service_rate=mu, servers=s)
            )
    return waits


def evaluate(instance: Instance, solution: Solution) -> CostBreakdown:
    """Objective value of a structurally well-formed solution.

    total = station activation + charger install + travel + expected wait,
    all in currency per minute. Waits are recomputed from the queueing model,
    never read from ``solution.waits``. Deterministic: sums run in sorted key
    order, so identical inputs give bit-identical results.
    """
    assigned: dict[int, tuple[int, int]] = {}
    for (i, j, k) in solution.assignments:
        if i in assigned:
            raise ValueError(f"demand {i} assigned more than once")
        if i not in instance.demand_by_id:
            raise ValueError(f"unknown demand id {i}")
        if j not in instance.station_by_id or k not in instance.type_by_id:
            raise ValueError(f"unknown station/type in assignment {(i, j, k)}")
        assigned[i] = (j, k)
    missing = [d.id for d in instance.demand_points if d.id not in assigned]
    if missing:
        raise UnassignedDemandError(f"demand points without assignment: {missing}")

    waits = compute_waits(instance, solution.assignments, solution.chargers)

    station = sum(instance.station_by_id[j].fixed_cost_rate for j in sorted(solution.active))
    charger = sum(
        instance.type_by_id[k].unit_cost_rate * s
        for (j, k), s in sorted(solution.chargers.items())
    )
    travel = 0.0
    waiting = 0.0
    per_assignment: dict[tuple[int, int, int], float] = {}
    for (i, j, k) in sorted(solution.assignments):
        lam = instance.demand_by_id[i].rate
        t = instance.travel[(i, j)]
        w = waits[(j, k)]
        travel += lam * instance.travel_cost_rate * t
        waiting += lam * instance.wait_cost_rate * w
        per_assignment[(i, j, k)] = lam * (
            instance.travel_cost_rate * t + instance.wait_cost_rate * w
        )
    total = station + charger + travel + waiting
    return CostBreakdown(
        station=station,
        charger=charger,
        travel=travel,
        waiting=waiting,
        total=total,
        per_assignment=per_assignment,
    )


@dataclass(frozen=True)
class Violation:
    """One violated constraint instance (data, not an exception)."""

    code: str
    subject: tuple
    detail: str


def check_feasibility(instance: Instance, solution: Solution) -> list[Violation]:
    """Every violated constraint of the deployment model, as a list.

    Codes: ``unknown_id``, ``unreachable_station``, ``inactive_station``,
    ``not_single_sourced``, ``unstable_queue``, ``wait_too_low``,
    ``charger_limit``, ``chargers_at_inactive_station`` and, when the
    instance enforces proximity, ``not_closest_active``.
    """
    out: list[Violation] = []
    lam_of = instance.demand_by_id

    counts: dict[int, int] = {d.id: 0 for d in instance.demand_points}
    for (i, j, k) in sorted(solution.assignments):
        if i not in lam_of or j not in instance.station_by_id or k not in instance.type_by_id:
            out.append(Violation("unknown_id", (i, j, k), "assignment uses an unknown id"))
            continue
        counts[i] += 1
        if (i, j) not in instance.travel:
            out.append(
                Violation("unreachable_station", (i, j, k), f"station {j} not reachable from demand {i}")
            )
        if j not in solution.active:
            out.append(
                Violation("inactive_station", (i, j, k), f"assignment to inactive station {j}")
            )
    for i, n in sorted(counts.items()):
        if n != 1:
            out.append(
                Violation("not_single_sourced", (i,), f"demand {i} has {n} assignments, needs exactly 1")
            )

    for j in sorted(solution.active):
        if j not in instance.station_by_id:
            out.append(Violation("unknown_id", (j,), f"active station {j} does not exist"))

    loads = pair_loads(
        instance,
        (t for t in solution.assignments if t[0] in lam_of and t[1] in instance.station_by_id and t[2] in instance.type_by_id),
    )
    keys = sorted(set(loads) | set(solution.chargers))
    for (j, k) in keys:
        if j not in instance.station_by_id or k not in instance.type_by_id:
            out.append(Violation("unknown_id", (j, k), "charger count for unknown station/type"))
            continue
        s = solution.chargers.get((j, k), 0)
        cap = instance.station_cap(j, k)
        if s < 0 or s > cap:
            out.append(
                Violation("charger_limit", (j, k), f"count {s} outside [0, {cap}]")
            )
        if s > 0 and j not in solution.active:
            out.append(
                Violation("chargers_at_inactive_station", (j, k), f"{s} chargers at inactive station {j}")
            )
        lam = loads.get((j, k), 0.0)
        mu = instance.type_by_id[k].service_rate
        if mu * s * (1.0 - instance.epsilon) < lam:
            out.append(
                Violation("unstable_queue", (j, k), f"load {lam:.6g} > capacity {mu * s * (1.0 - instance.epsilon):.6g}")
            )
        elif s > 0:
            true_wait = queueing.expected_wait(
                queueing.QueueModel(arrival_rate=lam, service_rate=mu, servers=s)
            )
            stored = solution.waits.get((j, k))
            if stored is not None and stored < true_wait - _WAIT_TOL:
                out.append(
                    Violation("wait_too_low", (j, k), f"stored wait {stored:.9g} < steady-state {true_wait:.9g}")
                )

    if instance.enforce_proximity:
        by_demand = {}
        for (i, j, k) in sorted(solution.assignments):
            if counts.get(i) == 1 and (i, j) in instance.travel:
                by_demand[i] = j
        for i, j in sorted(by_demand.items()):
            options = [
                instance.travel[(i, jj)]
                for jj in lam_of[i].reachable
                if jj in solution.active
            ]
            if options and instance.travel[(i, j)] > min(options) + _TRAVEL_TIE_TOL:
                out.append(
                    Violation(
                        "not_closest_active",
                        (i, j),
                        f"travel {instance.travel[(i, j)]:.6g} > closest active {min(options):.6g}",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# JSON schema: {demand_points, stations, charger_types, costs, travel, options}


def instance_to_dict(instance: Instance) -> dict:
    return {
        "demand_points": [
            {
                "id": d.id,
                "lat": d.lat,
                "lon": d.lon,
                "rate": d.rate,
                **({"agency": d.agency} if d.agency is not None else {}),
            }
            for d in instance.demand_points
        ],
        "stations": [
            {
                "id": s.id,
                "lat": s.lat,
                "lon": s.lon,
                "fixed_cost_rate": s.fixed_cost_rate,
                "max_chargers": {str(k): v for k, v in sorted(s.max_chargers.items())},
                "is_garage": s.is_garage,
                **({"agency": s.agency} if s.agency is not None else {}),
            }
            for s in instance.stations
        ],
        "charger_types": [
            {
                "id": k.id,
                "power_kw": k.power_kw,
                "unit_cost_rate": k.unit_cost_rate,
                "recharge_time_min": k.recharge_time_min,
            }
            for k in instance.charger_types
        ],
        "costs": {
            "travel_cost_rate": instance.travel_cost_rate,
            "wait_cost_rate": instance.wait_cost_rate,
        },
        "travel": [[i, j, t] for (i, j), t in sorted(instance.travel.items())],
        "options": {
            "epsilon": instance.epsilon,
            "enforce_proximity": instance.enforce_proximity,
            "speed_kmh": instance.speed_kmh,
            **(
                {"max_travel_minutes": instance.max_travel_minutes}
                if instance.max_travel_minutes is not None
                else {}
            ),
        },
    }


def instance_from_dict(data: dict) -> Instance:
    opts = data.get("options", {})
    kinds = [
        ChargerType(
            id=int(k["id"]),
            power_kw=float(k["power_kw"]),
            unit_cost_rate=float(k["unit_cost_rate"]),
            recharge_time_min=float(
                k.get("recharge_time_min", 1.0 / k["service_rate"] if "service_rate" in k else 0.0)
            ),
        )
        for k in data["charger_types"]
    ]
    dps = [
        DemandPoint(
            id=int(d["id"]),
            lat=float(d["lat"]),
            lon=float(d["lon"]),
            rate=float(d["rate"]),
            agency=d.get("agency"),
        )
        for d in data["demand_points"]
    ]
    sts = [
        CandidateStation(
            id=int(s["id"]),
            lat=float(s["lat"]),
            lon=float(s["lon"]),
            fixed_cost_rate=float(s["fixed_cost_rate"]),
            max_chargers={int(k): int(v) for k, v in s.get("max_chargers", {}).items()},
            is_garage=bool(s.get("is_garage", False)),
            agency=s.get("agency"),
        )
        for s in data["stations"]
    ]
    travel = None
    if data.get("travel"):
        travel = {(int(i), int(j)): float(t) for i, j, t in data["travel"]}
    return make_instance(
        dps,
        sts,
        kinds,
        travel_cost_rate=float(data["costs"]["travel_cost_rate"]),
        wait_cost_rate=float(data["costs"]["wait_cost_rate"]),
        travel=travel,
        speed_kmh=float(opts.get("speed_kmh", 30.0)),
        max_travel_minutes=opts.get("max_travel_minutes"),
        epsilon=float(opts.get("epsilon", 1e-6)),
        enforce_proximity=bool(opts.get("enforce_proximity", False)),
    )


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))
