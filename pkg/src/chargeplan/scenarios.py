"""Deployment-scenario matrix and one-at-a-time sensitivity sweeps.

Scenarios cross two ownership modes (joint: agencies share stations;
separate: each agency deploys on its own labeled stations) with three
station-pool regimes (garages only, non-garages only, both). Separate mode
solves one sub-instance per agency and sums the costs. The joint mixed-pool
scenario is the baseline every row is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from . import model as mdl
from .errors import ChargePlanError, InfeasibleDemandError, InfeasibleError
from .exact import SolverReport

SolveFn = Callable[[mdl.Instance], SolverReport]

SWEEP_PARAMETERS = ("wait_cost", "charger_power", "station_cost", "charger_cost")


@dataclass(frozen=True)
class ScenarioSpec:
    """One deployment scenario; ``agency`` is set when solving one side of a
    separate deployment."""

    joint: bool
    allow_garage: bool
    allow_other: bool
    agency: str | None = None

    def __post_init__(self) -> None:
        if not (self.allow_garage or self.allow_other):
            raise ValueError("at least one station class must be allowed")

    @property
    def label(self) -> str:
        pool = {(True, True): "mixed", (True, False): "garage", (False, True): "other"}[
            (self.allow_garage, self.allow_other)
        ]
        return ("joint" if self.joint else "separate") + "-" + pool


def scenario_matrix() -> list[ScenarioSpec]:
    """The six scenarios, baseline (joint-mixed) last."""
    out = []
    for joint in (False, True):
        for garage, other in ((True, False), (False, True), (True, True)):
            out.append(ScenarioSpec(joint=joint, allow_garage=garage, allow_other=other))
    return out


def restrict_instance(
    instance: mdl.Instance,
    *,
    allow_garage: bool = True,
    allow_other: bool = True,
    agency: str | None = None,
) -> mdl.Instance:
    """Sub-instance with a filtered station pool (and demand set, when an
    agency is given). Travel entries are restricted to surviving pairs.

    Raises :class:`InfeasibleDemandError` when a kept demand point loses all
    of its reachable stations.
    """
    stations = [
        s
        for s in instance.stations
        if (allow_garage if s.is_garage else allow_other)
        and (agency is None or s.agency == agency)
    ]
    demands = [d for d in instance.demand_points if agency is None or d.agency == agency]
    keep_j = {s.id for s in stations}
    keep_i = {d.id for d in demands}
    travel = {
        (i, j): t for (i, j), t in instance.travel.items() if i in keep_i and j in keep_j
    }
    return mdl.make_instance(
        [replace(d, reachable=()) for d in demands],
        [replace(s, served=()) for s in stations],
        instance.charger_types,
        travel_cost_rate=instance.travel_cost_rate,
        wait_cost_rate=instance.wait_cost_rate,
        travel=travel,
        speed_kmh=instance.speed_kmh,
        max_travel_minutes=instance.max_travel_minutes,
        epsilon=instance.epsilon,
        enforce_proximity=instance.enforce_proximity,
    )


def _agencies(instance: mdl.Instance) -> list[str]:
    labels = {d.agency for d in instance.demand_points}
    if None in labels:
        raise ValueError("separate scenarios need an agency label on every demand point")
    return sorted(labels)


@dataclass(frozen=True)
class ScenarioRow:
    """Aggregated outcome of one scenario."""

    scenario: ScenarioSpec
    feasible: bool
    total_cost: float | None
    stations_active: int | None
    chargers_per_type: dict[int, int] | None
    mean_wait: float | None
    mean_utilization: float | None

    @property
    def label(self) -> str:
        return self.scenario.label


def _solution_stats(instance: mdl.Instance, sol: mdl.Solution):
    loads = mdl.pair_loads(instance, sol.assignments)
    per_type: dict[int, int] = {k.id: 0 for k in instance.charger_types}
    waits = []
    utils = []
    for (j, k), s in sorted(sol.chargers.items()):
        if s <= 0:
            continue
        per_type[k] += s
        waits.append(sol.waits[(j, k)])
        mu = instance.type_by_id[k].service_rate
        utils.append(loads.get((j, k), 0.0) / (mu * s))
    return {
        "stations": len(sol.active),
        "per_type": per_type,
        "waits": waits,
        "utils": utils,
        "cost": sol.cost.total,
    }


def _merge_solutions(parts: list[mdl.Solution]) -> mdl.Solution:
    active: set[int] = set()
    assignments: set[tuple[int, int, int]] = set()
    chargers: dict[tuple[int, int], int] = {}
    for sol in parts:
        active |= sol.active
        assignments |= sol.assignments
        chargers.update(sol.chargers)
    return mdl.Solution(
        active=frozenset(active), assignments=frozenset(assignments), chargers=chargers
    )


def run_scenario(instance: mdl.Instance, spec: ScenarioSpec, solve: SolveFn) -> ScenarioRow:
    """Solve one scenario.

    Separate mode solves one sub-instance per agency; the per-agency
    solutions are then merged (agency station pools are disjoint) and priced
    by the same evaluator on the pool-restricted instance the joint scenario
    uses, so joint and separate totals are directly comparable.
    """
    try:
        pool = restrict_instance(
            instance, allow_garage=spec.allow_garage, allow_other=spec.allow_other
        )
        if spec.joint:
            sol = solve(pool).best
        else:
            parts = []
            for agency in _agencies(instance):
                sub = restrict_instance(
                    instance,
                    allow_garage=spec.allow_garage,
                    allow_other=spec.allow_other,
                    agency=agency,
                )
                parts.append(solve(sub).best)
            merged = _merge_solutions(parts)
            sol = mdl.Solution(
                active=merged.active,
                assignments=merged.assignments,
                chargers=merged.chargers,
                waits=mdl.compute_waits(pool, merged.assignments, merged.chargers),
                cost=mdl.evaluate(pool, merged),
            )
    except (InfeasibleDemandError, InfeasibleError):
        return ScenarioRow(spec, False, None, None, None, None, None)

    stats = _solution_stats(pool, sol)
    return ScenarioRow(
        scenario=spec,
        feasible=True,
        total_cost=stats["cost"],
        stations_active=stats["stations"],
        chargers_per_type=stats["per_type"],
        mean_wait=sum(stats["waits"]) / len(stats["waits"]) if stats["waits"] else 0.0,
        mean_utilization=sum(stats["utils"]) / len(stats["utils"]) if stats["utils"] else 0.0,
    )


def run_scenarios(instance: mdl.Instance, solve: SolveFn) -> list[ScenarioRow]:
    return [run_scenario(instance, spec, solve) for spec in scenario_matrix()]


# ---------------------------------------------------------------------------
# Sensitivity sweeps


@dataclass(frozen=True)
class SweepSpec:
    """One-at-a-time sweep of a single model parameter."""

    parameter: str
    multipliers: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
        if not self.multipliers or any(m <= 0 for m in self.multipliers):
            raise ValueError("multipliers must be positive")


def scale_instance(instance: mdl.Instance, parameter: str, multiplier: float) -> mdl.Instance:
    """Instance with one parameter scaled, all else fixed. Scaling charger
    power rescales the service rates accordingly."""
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    if parameter == "wait_cost":
        return replace(instance, wait_cost_rate=instance.wait_cost_rate * multiplier)
    if parameter == "station_cost":
        return replace(
            instance,
            stations=tuple(
                replace(s, fixed_cost_rate=s.fixed_cost_rate * multiplier)
                for s in instance.stations
            ),
        )
    if parameter == "charger_cost":
        return replace(
            instance,
            charger_types=tuple(
                replace(k, unit_cost_rate=k.unit_cost_rate * multiplier)
                for k in instance.charger_types
            ),
        )
    if parameter == "charger_power":
        return replace(
            instance,
            charger_types=tuple(
                replace(
                    k,
                    power_kw=k.power_kw * multiplier,
                    recharge_time_min=k.recharge_time_min / multiplier,
                )
                for k in instance.charger_types
            ),
        )
    raise ValueError(f"unknown parameter {parameter!r}")


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    multiplier: float
    total_cost: float
    pct_change: float


def run_sweep(instance: mdl.Instance, sweep: SweepSpec, solve: SolveFn) -> list[SweepRow]:
    """Baseline solve followed by one solve per multiplier; reports the
    percent change of the objective against the baseline."""
    base = solve(instance).best.cost.total
    rows = [SweepRow(sweep.parameter, 1.0, base, 0.0)]
    for m in sweep.multipliers:
        scaled = scale_instance(instance, sweep.parameter, m)
        cost = solve(scaled).best.cost.total
        if base <= 0:
            raise ChargePlanError("baseline objective must be positive for a sweep")
        rows.append(SweepRow(sweep.parameter, m, cost, 100.0 * (cost - base) / base))
    return rows


def charger_count_labels(instance: mdl.Instance) -> dict[int, str]:
    """Column labels for per-type charger totals: slow/fast when there are
    exactly two types, otherwise type ids."""
    kinds = sorted(instance.charger_types, key=lambda k: (k.power_kw, k.id))
    if len(kinds) == 2:
        return {kinds[0].id: "slow", kinds[1].id: "fast"}
    return {k.id: f"type{k.id}" for k in kinds}

