"""Exact optimization: exhaustive oracle and cut-tightened branch-and-bound.

Both solvers search over assignment vectors only. For a fixed assignment the
remaining decisions are determined: active stations are exactly those with
traffic (idle activations only add cost), charger counts come from the convex
per-pair sizing rule, and waits sit at their steady-state values. The
branch-and-bound assigns demands in descending-rate order, bounds partial
assignments with travel and service-time floors, and tightens the waiting
floors with affine underestimators of the convex delay factor collected at
every incumbent.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import model as mdl
from . import queueing
from .construction import AssignmentSet, best_chargers, build_solution, min_chargers, size_pair
from .errors import (
    CutUndefinedError,
    InfeasibleError,
    InstanceTooLargeError,
    InvalidBoundsError,
)

_PRUNE_MARGIN = 1e-9
_TRAVEL_TIE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the exact searches."""

    gap_threshold: float = 0.0
    time_limit: float | None = None
    big_m: float | None = None
    max_chargers: int | None = None
    enforce_proximity: bool | None = None  # None inherits the instance flag
    seed: int = 0
    warm_start: mdl.Solution | None = None
    initial_cuts: tuple["WaitFloorCut", ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.gap_threshold < 1.0:
            raise ValueError("gap_threshold must lie in [0, 1)")


@dataclass(frozen=True)
class SolverReport:
    """Outcome of one solve: incumbent, bound certificate, and search stats."""

    best: mdl.Solution | None
    lower_bound: float
    upper_bound: float
    gap: float
    nodes_explored: int = 0
    cuts_added: int = 0
    time_to_best: float = 0.0
    terminated_by: str = "optimality"  # optimality | gap | time
    stats: Mapping[str, object] = field(default_factory=dict)


def compute_gap(lower: float, upper: float) -> float:
    """Relative optimality gap 1 - lower/upper for positive, ordered bounds."""
    if lower <= 0 or upper <= 0 or lower > upper:
        raise InvalidBoundsError(f"need 0 < lower <= upper, got {lower} > {upper}")
    return 1.0 - lower / upper


@dataclass(frozen=True)
class WaitFloorCut:
    """Affine lower bound on the expected wait of one pair, as a function of
    the routed load, valid whenever exactly ``servers`` chargers are built.

    value(load) = intercept/(mu s) + slope * load/(mu s)^2 + 1/mu
    """

    station_id: int
    charger_type_id: int
    servers: int
    service_rate: float
    intercept: float
    slope: float
    anchor_rho: float

    def value(self, load: float) -> float:
        ms = self.service_rate * self.servers
        return self.intercept / ms + self.slope * load / (ms * ms) + 1.0 / self.service_rate

    def excess(self, load: float) -> float:
        """Floor on the wait beyond the bare service time 1/mu."""
        ms = self.service_rate * self.servers
        return self.intercept / ms + self.slope * load / (ms * ms)


def make_cut(
    station_id: int,
    charger_type: mdl.ChargerType,
    servers: int,
    anchor_rho: float,
) -> WaitFloorCut:
    """Wait floor for a pair from the delay-factor support line at
    ``anchor_rho``. Undefined for zero servers."""
    if servers < 1:
        raise CutUndefinedError("wait floor undefined for zero chargers")
    tc = queueing.tangent_cut(anchor_rho, servers, charger_type.service_rate)
    return WaitFloorCut(
        station_id=station_id,
        charger_type_id=charger_type.id,
        servers=servers,
        service_rate=charger_type.service_rate,
        intercept=tc.intercept,
        slope=tc.slope,
        anchor_rho=anchor_rho,
    )


def _effective_proximity(instance: mdl.Instance, config: SolverConfig | None) -> bool:
    if config is not None and config.enforce_proximity is not None:
        return config.enforce_proximity
    return instance.enforce_proximity


def default_big_m(instance: mdl.Instance) -> float:
    """A per-assignment cost bound: ten times the worst travel plus the worst
    stable single-charger wait, scaled by the largest demand rate."""
    if not instance.demand_points:
        return 1.0
    max_rate = max(d.rate for d in instance.demand_points)
    max_travel = max(instance.travel.values(), default=0.0)
    worst_wait = max(
        queueing.expected_wait(
            queueing.QueueModel(
                arrival_rate=k.service_rate * (1.0 - instance.epsilon),
                service_rate=k.service_rate,
                servers=1,
            )
        )
        for k in instance.charger_types
    )
    return 10.0 * max_rate * (
        instance.travel_cost_rate * max_travel + instance.wait_cost_rate * worst_wait
    )


def root_lower_bound(instance: mdl.Instance) -> float:
    """Cheap valid bound: per-demand travel+service floors plus one station
    and one charger somewhere."""
    if not instance.demand_points:
        return 0.0
    floor = 0.0
    for d in instance.demand_points:
        floor += min(
            d.rate
            * (
                instance.travel_cost_rate * instance.travel[(d.id, j)]
                + instance.wait_cost_rate / k.service_rate
            )
            for j in d.reachable
            for k in instance.charger_types
        )
    floor += min(s.fixed_cost_rate for s in instance.stations)
    floor += min(k.unit_cost_rate for k in instance.charger_types)
    return floor


class _PairSizer:
    """Memoized exact sizing of one (station, type, demand-subset) pair."""

    def __init__(self, instance: mdl.Instance, cap_override: int | None):
        self.instance = instance
        self.cap_override = cap_override
        self._memo: dict[tuple[int, int, int], tuple[int, float] | None] = {}

    def cap(self, j: int, k: int) -> int:
        cap = self.instance.station_cap(j, k)
        if self.cap_override is not None:
            cap = min(cap, self.cap_override)
        return cap

    def best(self, j: int, k: int, mask: int, load: float) -> tuple[int, float] | None:
        """(charger count, charger+wait cost) for the pair, or None if the
        load cannot be stabilized within the capacity."""
        key = (j, k, mask)
        if key in self._memo:
            return self._memo[key]
        kt = self.instance.type_by_id[k]
        sized = size_pair(load, kt, self.cap(j, k), self.instance.wait_cost_rate, self.instance.epsilon)
        if sized is None:
            self._memo[key] = None
            return None
        s, wait = sized
        cost = kt.unit_cost_rate * s + load * self.instance.wait_cost_rate * wait
        self._memo[key] = (s, cost)
        return self._memo[key]


def _order_demands(instance: mdl.Instance) -> list[mdl.DemandPoint]:
    return sorted(instance.demand_points, key=lambda d: (-d.rate, d.id))


def _choices_for(instance: mdl.Instance, d: mdl.DemandPoint) -> list[tuple[int, int, float]]:
    """(station, type, myopic travel+service cost) options, cheapest first."""
    opts = []
    for j in d.reachable:
        for k in instance.charger_types:
            myopic = d.rate * (
                instance.travel_cost_rate * instance.travel[(d.id, j)]
                + instance.wait_cost_rate / k.service_rate
            )
            opts.append((j, k.id, myopic))
    opts.sort(key=lambda o: (o[2], o[0], o[1]))
    return opts


def _closest_ok(instance: mdl.Instance, i: int, j: int, active: Iterable[int]) -> bool:
    best = min(
        (instance.travel[(i, jj)] for jj in instance.demand_by_id[i].reachable if jj in active),
        default=math.inf,
    )
    return instance.travel[(i, j)] <= best + _TRAVEL_TIE_TOL


def brute_force(
    instance: mdl.Instance,
    *,
    leaf_cap: float = 2e7,
    enforce_proximity: bool | None = None,
) -> SolverReport:
    """Exhaustive enumeration of every assignment vector; the reference
    oracle for everything else. Gap is exactly zero on success."""
    t0 = time.perf_counter()
    demands = _order_demands(instance)
    if not demands:
        sol = mdl.Solution(frozenset(), frozenset(), {}, {}, None)
        return SolverReport(best=sol, lower_bound=0.0, upper_bound=0.0, gap=0.0)
    proximity = _effective_proximity(instance, None) if enforce_proximity is None else enforce_proximity

    choices = [_choices_for(instance, d) for d in demands]
    n_leaves = 1.0
    for c in choices:
        n_leaves *= len(c)
    if n_leaves > leaf_cap:
        raise InstanceTooLargeError(f"{n_leaves:.3g} assignment vectors exceed the cap {leaf_cap:.3g}")

    sizer = _PairSizer(instance, None)
    n = len(demands)
    rates = [d.rate for d in demands]
    ids = [d.id for d in demands]

    masks: dict[tuple[int, int], int] = {}
    loads: dict[tuple[int, int], float] = {}
    picked: list[tuple[int, int]] = [(-1, -1)] * n
    best_cost = math.inf
    best_picked: list[tuple[int, int]] | None = None
    station_cost = {s.id: s.fixed_cost_rate for s in instance.stations}

    def leaf(travel_acc: float) -> None:
        nonlocal best_cost, best_picked
        cost = travel_acc
        stations_seen: set[int] = set()
        for (j, k), mask in masks.items():
            sized = sizer.best(j, k, mask, loads[(j, k)])
            if sized is None:
                return
            cost += sized[1]
            if j not in stations_seen:
                stations_seen.add(j)
                cost += station_cost[j]
        if proximity:
            for d in range(n):
                if not _closest_ok(instance, ids[d], picked[d][0], stations_seen):
                    return
        if cost < best_cost:
            best_cost = cost
            best_picked = picked.copy()

    def rec(d: int, travel_acc: float) -> None:
        if d == n:
            leaf(travel_acc)
            return
        bit = 1 << d
        lam = rates[d]
        i = ids[d]
        for (j, k, _) in choices[d]:
            key = (j, k)
            old_mask = masks.get(key)
            old_load = loads.get(key, 0.0)
            masks[key] = (old_mask or 0) | bit
            loads[key] = old_load + lam
            picked[d] = (j, k)
            rec(d + 1, travel_acc + lam * instance.travel_cost_rate * instance.travel[(i, j)])
            if old_mask is None:
                del masks[key]
                del loads[key]
            else:
                masks[key] = old_mask
                loads[key] = old_load

    rec(0, 0.0)
    if best_picked is None:
        raise InfeasibleError("no assignment vector admits stable queues within capacity")

    assignment = AssignmentSet(
        frozenset((ids[d], best_picked[d][0], best_picked[d][1]) for d in range(n))
    )
    chargers = best_chargers(instance, assignment)
    solution = build_solution(instance, assignment, chargers)
    total = solution.cost.total
    return SolverReport(
        best=solution,
        lower_bound=total,
        upper_bound=total,
        gap=0.0,
        nodes_explored=int(n_leaves),
        time_to_best=time.perf_counter() - t0,
        terminated_by="optimality",
    )


class _TreeSearch:
    """Best-first branch-and-bound over per-demand assignment choices."""

    def __init__(self, instance: mdl.Instance, config: SolverConfig):
        self.instance = instance
        self.config = config
        self.proximity = _effective_proximity(instance, config)
        self.demands = _order_demands(instance)
        self.n = len(self.demands)
        self.choices = [_choices_for(instance, d) for d in self.demands]
        self.future_floor = [min((c[2] for c in ch), default=0.0) for ch in self.choices]
        self.suffix = [0.0] * (self.n + 1)
        for d in range(self.n - 1, -1, -1):
            self.suffix[d] = self.suffix[d + 1] + self.future_floor[d]
        self.sizer = _PairSizer(instance, config.max_chargers)
        # cut pool: (station, type, servers) -> list of (intercept, slope)
        self.cuts: dict[tuple[int, int, int], list[tuple[float, float]]] = {}
        self.cut_keys: set[tuple[int, int, int, float]] = set()
        self.cuts_added = 0
        for cut in config.initial_cuts:
            self._store_cut(cut)
        self.station_cost = {s.id: s.fixed_cost_rate for s in instance.stations}

    # -- cut plumbing ------------------------------------------------------

    def _store_cut(self, cut: WaitFloorCut) -> bool:
        key = (cut.station_id, cut.charger_type_id, cut.servers, round(cut.anchor_rho, 9))
        if key in self.cut_keys:
            return False
        self.cut_keys.add(key)
        self.cuts.setdefault(
            (cut.station_id, cut.charger_type_id, cut.servers), []
        ).append((cut.intercept, cut.slope))
        self.cuts_added += 1
        return True

    def collect_cuts(self) -> tuple[WaitFloorCut, ...]:
        out = []
        for (j, k, s), lines in sorted(self.cuts.items()):
            mu = self.instance.type_by_id[k].service_rate
            for (a, b) in lines:
                out.append(
                    WaitFloorCut(
                        station_id=j, charger_type_id=k, servers=s, service_rate=mu,
                        intercept=a, slope=b, anchor_rho=float("nan"),
                    )
                )
        return tuple(out)

    def _cuts_at_incumbent(self, loads: Mapping[tuple[int, int], float], chargers: Mapping[tuple[int, int], int]) -> None:
        for (j, k), s in sorted(chargers.items()):
            load = loads.get((j, k), 0.0)
            if s < 1 or load <= 0:
                continue
            mu = self.instance.type_by_id[k].service_rate
            rho = load / (mu * s)
            if 0.0 < rho < 1.0:
                self._store_cut(make_cut(j, self.instance.type_by_id[k], s, rho))

    # -- bounding ----------------------------------------------------------

    def pair_floor_extra(self, j: int, k: int, load: float) -> float | None:
        """Lower bound on charger cost plus committed waiting cost beyond the
        service-time floor, minimized over every admissible charger count."""
        kt = self.instance.type_by_id[k]
        mu = kt.service_rate
        cap = self.sizer.cap(j, k)
        smin = min_chargers(load, mu, self.instance.epsilon)
        if smin > cap:
            return None
        c_wait = load * self.instance.wait_cost_rate
        best = math.inf
        for s in range(smin, cap + 1):
            base = kt.unit_cost_rate * s
            if base >= best:
                break
            extra = 0.0
            for (a, b) in self.cuts.get((j, k, s), ()):
                ms = mu * s
                extra = max(extra, a / ms + b * load / (ms * ms))
            best = min(best, base + c_wait * extra)
        return best

    def node_bound(self, path: tuple[tuple[int, int], ...]) -> float | None:
        """Valid lower bound on every completion of a partial assignment:
        committed station costs, per-pair charger/wait floors, committed
        travel+service cost, and per-demand floors for the rest. None when
        some committed pair is already beyond capacity."""
        loads: dict[tuple[int, int], float] = {}
        stations: set[int] = set()
        assigned = 0.0
        for d, (j, k) in enumerate(path):
            lam = self.demands[d].rate
            loads[(j, k)] = loads.get((j, k), 0.0) + lam
            stations.add(j)
            i = self.demands[d].id
            assigned += lam * (
                self.instance.travel_cost_rate * self.instance.travel[(i, j)]
                + self.instance.wait_cost_rate / self.instance.type_by_id[k].service_rate
            )
        bound = sum(self.station_cost[j] for j in sorted(stations)) + assigned + self.suffix[len(path)]
        for (j, k), load in sorted(loads.items()):
            floor = self.pair_floor_extra(j, k, load)
            if floor is None:
                return None
            bound += floor
        return bound

    # -- leaf evaluation ---------------------------------------------------

    def leaf_cost(self, path: tuple[tuple[int, int], ...]) -> tuple[float, dict[tuple[int, int], int]] | None:
        masks: dict[tuple[int, int], int] = {}
        loads: dict[tuple[int, int], float] = {}
        travel_acc = 0.0
        stations: set[int] = set()
        for d, (j, k) in enumerate(path):
            lam = self.demands[d].rate
            masks[(j, k)] = masks.get((j, k), 0) | (1 << d)
            loads[(j, k)] = loads.get((j, k), 0.0) + lam
            stations.add(j)
            travel_acc += lam * self.instance.travel_cost_rate * self.instance.travel[(self.demands[d].id, j)]
        cost = travel_acc + sum(self.station_cost[j] for j in sorted(stations))
        chargers: dict[tuple[int, int], int] = {}
        for (j, k), mask in sorted(masks.items()):
            sized = self.sizer.best(j, k, mask, loads[(j, k)])
            if sized is None:
                return None
            chargers[(j, k)] = sized[0]
            cost += sized[1]
        return cost, chargers

    def _solution_from(self, path: tuple[tuple[int, int], ...]) -> mdl.Solution:
        assignment = AssignmentSet(
            frozenset(
                (self.demands[d].id, j, k) for d, (j, k) in enumerate(path)
            )
        )
        chargers = best_chargers(
            self.instance, assignment, max_per_pair=self.config.max_chargers
        )
        return build_solution(self.instance, assignment, chargers)

    # -- search ------------------------------------------------------------

    def _children(self, path: tuple[tuple[int, int], ...]):
        """Feasible extensions of a node, cheapest myopic cost first."""
        depth = len(path)
        d = self.demands[depth]
        loads: dict[tuple[int, int], float] = {}
        stations: set[int] = set()
        for dd, (j, k) in enumerate(path):
            loads[(j, k)] = loads.get((j, k), 0.0) + self.demands[dd].rate
            stations.add(j)
        out = []
        for (j, k, myopic) in self.choices[depth]:
            kt = self.instance.type_by_id[k]
            new_load = loads.get((j, k), 0.0) + d.rate
            cap = self.sizer.cap(j, k)
            if kt.service_rate * cap * (1.0 - self.instance.epsilon) < new_load:
                continue
            if self.proximity:
                new_active = stations | {j}
                if not _closest_ok(self.instance, d.id, j, new_active):
                    continue
                if j not in stations and any(
                    not _closest_ok(self.instance, self.demands[dd].id, jj, new_active)
                    for dd, (jj, _) in enumerate(path)
                ):
                    continue
            dyn = myopic + (0.0 if j in stations else self.station_cost[j])
            out.append((dyn, j, k))
        out.sort(key=lambda c: (c[0], c[1], c[2]))
        return [(j, k) for (_, j, k) in out]

    def solve(self) -> SolverReport:
        t0 = time.perf_counter()
        best_path: tuple[tuple[int, int], ...] | None = None
        upper = math.inf
        time_to_best = 0.0
        nodes = 0
        terminated = "optimality"

        if self.n == 0:
            sol = mdl.Solution(frozenset(), frozenset(), {}, {}, None)
            return SolverReport(best=sol, lower_bound=0.0, upper_bound=0.0, gap=0.0)

        def register(path: tuple[tuple[int, int], ...], cost: float, chargers) -> None:
            nonlocal best_path, upper, time_to_best
            if cost < upper:
                best_path, upper = path, cost
                time_to_best = time.perf_counter() - t0
                loads: dict[tuple[int, int], float] = {}
                for dd, (j, k) in enumerate(path):
                    loads[(j, k)] = loads.get((j, k), 0.0) + self.demands[dd].rate
                self._cuts_at_incumbent(loads, chargers)

        if self.config.warm_start is not None:
            ws = self.config.warm_start
            by_demand = {i: (j, k) for (i, j, k) in ws.assignments}
            try:
                path = tuple(by_demand[d.id] for d in self.demands)
                res = self.leaf_cost(path)
                if res is not None:
                    register(path, res[0], res[1])
            except KeyError:
                pass

        # greedy myopic dive for an initial incumbent
        path: tuple[tuple[int, int], ...] = ()
        while len(path) < self.n:
            kids = self._children(path)
            if not kids:
                break
            path = path + (kids[0],)
        if len(path) == self.n:
            res = self.leaf_cost(path)
            if res is not None:
                register(path, res[0], res[1])

        lower = 0.0
        heap: list[tuple[float, int, tuple[tuple[int, int], ...]]] = []
        seq = itertools.count()
        root_bound = self.node_bound(())
        if root_bound is not None:
            heapq.heappush(heap, (root_bound, next(seq), ()))

        while heap:
            if self.config.time_limit is not None and time.perf_counter() - t0 > self.config.time_limit:
                terminated = "time"
                if heap:
                    lower = max(lower, min(heap[0][0], upper))
                break
            key, _, path = heapq.heappop(heap)
            lower = max(lower, min(key, upper))
            if key >= upper - _PRUNE_MARGIN:
                continue  # drain; monotone bounds make everything left prunable
            bound = self.node_bound(path)  # re-tightened by cuts added since push
            if bound is None or bound >= upper - _PRUNE_MARGIN:
                continue
            nodes += 1
            if len(path) == self.n:
                res = self.leaf_cost(path)
                if res is not None:
                    register(path, res[0], res[1])
                continue
            for (j, k) in self._children(path):
                child = path + ((j, k),)
                child_bound = self.node_bound(child)
                if child_bound is None or child_bound >= upper - _PRUNE_MARGIN:
                    continue
                heapq.heappush(heap, (child_bound, next(seq), child))

            if (
                self.config.gap_threshold > 0.0
                and upper < math.inf
                and heap
                and 1.0 - min(heap[0][0], upper) / upper <= self.config.gap_threshold
            ):
                lower = max(lower, min(heap[0][0], upper))
                terminated = "gap"
                break

        if best_path is None:
            raise InfeasibleError("no stable assignment exists within charger capacities")

        solution = self._solution_from(best_path)
        total = solution.cost.total
        if terminated == "optimality" and not heap:
            lower = total  # search tree exhausted: the incumbent is proven optimal
        else:
            lower = min(lower, total)
        if lower > 0 and total > 0:
            gap = max(0.0, 1.0 - lower / total)
        else:
            gap = 0.0 if lower == total else 1.0
        return SolverReport(
            best=solution,
            lower_bound=lower,
            upper_bound=total,
            gap=gap,
            nodes_explored=nodes,
            cuts_added=self.cuts_added,
            time_to_best=time_to_best,
            terminated_by=terminated,
            stats={"cut_pool": len(self.cut_keys)},
        )


def branch_and_bound(instance: mdl.Instance, config: SolverConfig | None = None) -> SolverReport:
    """Exact best-first search; equals :func:`brute_force` when run to
    completion, and reports an honest bound gap when stopped early."""
    return _TreeSearch(instance, config or SolverConfig()).solve()


# ---------------------------------------------------------------------------
# JSON report serialization. Everything volatile (timings) stays out of the
# deterministic body; the CLI adds a metadata envelope around this.


def solution_to_dict(solution: mdl.Solution) -> dict:
    cost = solution.cost
    return {
        "active_stations": sorted(solution.active),
        "assignments": [
            {"demand": i, "station": j, "charger_type": k}
            for (i, j, k) in sorted(solution.assignments)
        ],
        "chargers": [
            {"station": j, "charger_type": k, "count": s}
            for (j, k), s in sorted(solution.chargers.items())
            if s > 0
        ],
        "waits": [
            {"station": j, "charger_type": k, "minutes": w}
            for (j, k), w in sorted(solution.waits.items())
        ],
        "cost": None
        if cost is None
        else {
            "station": cost.station,
            "charger": cost.charger,
            "travel": cost.travel,
            "waiting": cost.waiting,
            "total": cost.total,
        },
    }


def solution_from_dict(data: dict) -> mdl.Solution:
    return mdl.Solution(
        active=frozenset(data["active_stations"]),
        assignments=frozenset(
            (a["demand"], a["station"], a["charger_type"]) for a in data["assignments"]
        ),
        chargers={(c["station"], c["charger_type"]): c["count"] for c in data["chargers"]},
        waits={(w["station"], w["charger_type"]): w["minutes"] for w in data.get("waits", [])},
    )


def report_to_dict(report: SolverReport) -> dict:
    stats = {k: v for k, v in sorted(report.stats.items())}
    return {
        "terminated_by": report.terminated_by,
        "bounds": {
            "lower": report.lower_bound,
            "upper": report.upper_bound,
            "gap": report.gap,
        },
        "search": {
            "nodes_explored": report.nodes_explored,
            "cuts_added": report.cuts_added,
            "stats": stats,
        },
        "solution": None if report.best is None else solution_to_dict(report.best),
    }


def save_report(report: SolverReport, path, meta: dict | None = None) -> None:
    payload = dict(report_to_dict(report))
    payload["meta"] = meta or {}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
