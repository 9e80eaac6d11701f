"""Constructive primitives shared by every solver.

These are the building blocks the exact search and both metaheuristics lean
on: a greedy minimum feasible station set, a backtracking enumeration of
small covers, randomized demand assignment, and optimal charger sizing for a
fixed assignment. All of them are pure given an explicit RNG.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping

from . import model as mdl
from . import queueing
from .errors import InfeasibleError, UncoveredDemandError


@dataclass(frozen=True)
class AssignmentSet:
    """The set of (demand, station, type) triplets of one solution; every
    demand id appears exactly once."""

    triplets: frozenset[tuple[int, int, int]]

    def __post_init__(self) -> None:
        seen = set()
        for (i, _, _) in self.triplets:
            if i in seen:
                raise ValueError(f"demand {i} assigned more than once")
            seen.add(i)

    def by_demand(self) -> dict[int, tuple[int, int]]:
        return {i: (j, k) for (i, j, k) in self.triplets}


def station_capacity_ok(instance: mdl.Instance, station_id: int) -> bool:
    # Admission screen: the station could conceivably absorb every demand it
    # serves, i.e. total service capacity strictly exceeds total served rate.
    st = instance.station_by_id[station_id]
    cap = sum(
        kt.service_rate * st.max_chargers.get(kt.id, 0) for kt in instance.charger_types
    )
    served_rate = sum(instance.demand_by_id[i].rate for i in st.served)
    return cap > served_rate


def covers_all_demands(instance: mdl.Instance, active: Iterable[int]) -> bool:
    act = set(active)
    return all(act.intersection(d.reachable) for d in instance.demand_points)


def feasible_activation(instance: mdl.Instance, active: Iterable[int]) -> bool:
    """Coverage screen used by the metaheuristics: every demand point can
    reach an active station that also passes the capacity screen."""
    act = {j for j in active if station_capacity_ok(instance, j)}
    return all(act.intersection(d.reachable) for d in instance.demand_points)


def min_stations(instance: mdl.Instance) -> frozenset[int]:
    """Greedy small station set covering every demand point.

    Repeatedly activates the admissible station covering the most still
    uncovered demands (ties: lower fixed cost, then lower id). Stations
    failing the capacity screen are never activated.
    """
    uncovered = {d.id for d in instance.demand_points}
    candidates = {
        s.id for s in instance.stations if station_capacity_ok(instance, s.id)
    }
    chosen: set[int] = set()
    while uncovered:
        best = None
        for j in sorted(candidates):
            st = instance.station_by_id[j]
            gain = len(uncovered.intersection(st.served))
            if gain == 0:
                continue
            key = (-gain, st.fixed_cost_rate, j)
            if best is None or key < best[0]:
                best = (key, j)
        if best is None:
            raise InfeasibleError(
                f"demands {sorted(uncovered)} cannot be covered by any admissible station"
            )
        j = best[1]
        chosen.add(j)
        candidates.discard(j)
        uncovered -= set(instance.station_by_id[j].served)
    return frozenset(chosen)


def _min_cover_size(all_demands: frozenset[int], served: Mapping[int, frozenset[int]], covering: Mapping[int, list[int]]) -> int:
    """Exact minimum-cardinality cover size, by branching on the stations
    that can serve the most constrained uncovered demand."""
    best = math.inf

    def dfs(remaining: frozenset[int], size: int) -> None:
        nonlocal best
        if not remaining:
            best = min(best, size)
            return
        if size + 1 >= best:
            return
        pivot = min(remaining, key=lambda i: (len(covering[i]), i))
        for j in covering[pivot]:
            dfs(remaining - served[j], size + 1)

    dfs(all_demands, 0)
    if math.isinf(best):
        raise InfeasibleError("no station subset covers every demand point")
    return int(best)


def cover_sets(instance: mdl.Instance, population_size: int) -> list[frozenset[int]]:
    """Up to ``population_size`` station subsets covering all demands, each of
    the minimum cardinality S or S + 1.

    S is established by an exact minimum-cover search first; the collection
    pass is then a depth-first backtracking over stations in ascending id
    order that gathers qualifying subsets until the population is full. With
    a fixed station ordering the output is deterministic. (A single pass that
    resets its collection whenever a strictly smaller cover appears would
    silently drop qualifying supersets explored before the last reset.)
    """
    if population_size < 1:
        raise ValueError("population_size must be >= 1")
    all_demands = frozenset(d.id for d in instance.demand_points)
    if not all_demands:
        return [frozenset()]
    station_ids = sorted(s.id for s in instance.stations)
    served = {j: frozenset(instance.station_by_id[j].served) for j in station_ids}
    covering = {
        d.id: [j for j in station_ids if d.id in served[j]] for d in instance.demand_points
    }
    best_size = _min_cover_size(all_demands, served, covering)

    found: dict[frozenset[int], None] = {}

    def backtrack(remaining: frozenset[int], active: frozenset[int], pool: tuple[int, ...]) -> None:
        if len(found) >= population_size:
            return
        if not remaining:
            if len(active) in (best_size, best_size + 1):
                found.setdefault(active, None)
            return
        if len(active) >= best_size + 1:
            return
        for idx, j in enumerate(pool):
            if len(found) >= population_size:
                return
            backtrack(remaining - served[j], active | {j}, pool[:idx] + pool[idx + 1:])

    backtrack(all_demands, frozenset(), tuple(station_ids))
    return list(found)


def demand_assignment(
    instance: mdl.Instance,
    active: Iterable[int],
    randomization: float,
    rng: random.Random,
) -> AssignmentSet:
    """Assign each demand point to one (station, type) pair.

    With probability ``randomization`` the station is drawn uniformly from
    the active reachable set, otherwise the closest active station wins
    (ties: lowest id). The charger type is always uniform random.
    """
    if not 0.0 <= randomization <= 1.0:
        raise ValueError("randomization must lie in [0, 1]")
    act = set(active)
    type_ids = [k.id for k in instance.charger_types]
    triplets = []
    for d in instance.demand_points:
        options = [j for j in d.reachable if j in act]
        if not options:
            raise UncoveredDemandError(
                f"demand {d.id} has no active reachable station"
            )
        if rng.random() < randomization:
            j = options[rng.randrange(len(options))]
        else:
            j = min(options, key=lambda jj: (instance.travel[(d.id, jj)], jj))
        k = type_ids[rng.randrange(len(type_ids))]
        triplets.append((d.id, j, k))
    return AssignmentSet(frozenset(triplets))


def min_chargers(load: float, service_rate: float, epsilon: float) -> int:
    """Smallest integer server count keeping the queue inside the stability
    margin: mu * s * (1 - epsilon) >= load."""
    if load <= 0:
        return 0
    s = math.ceil(load / (service_rate * (1.0 - epsilon)))
    if service_rate * s * (1.0 - epsilon) < load:  # float guard
        s += 1
    return s


def size_pair(
    load: float,
    charger_type: mdl.ChargerType,
    cap: int,
    wait_cost_rate: float,
    epsilon: float,
) -> tuple[int, float] | None:
    """Best charger count for one (station, type) pair and its wait value.

    Starts at the stability minimum and keeps adding a charger while the
    marginal waiting-cost saving strictly exceeds the charger cost rate; the
    wait is convex in the count, so the first failing increment is the global
    stop. Returns None when even the minimum exceeds ``cap``.
    """
    if load <= 0:
        return (0, 0.0)
    mu = charger_type.service_rate
    s = min_chargers(load, mu, epsilon)
    if s > cap:
        return None
    wait = queueing.expected_wait(queueing.QueueModel(load, mu, s))
    while s + 1 <= cap:
        nxt = queueing.expected_wait(queueing.QueueModel(load, mu, s + 1))
        if load * wait_cost_rate * (wait - nxt) > charger_type.unit_cost_rate:
            s += 1
            wait = nxt
        else:
            break
    return (s, wait)


def best_chargers(
    instance: mdl.Instance,
    assignment: AssignmentSet,
    *,
    max_per_pair: int | None = None,
    marginal_weight: str = "wait",
) -> dict[tuple[int, int], int]:
    """Optimal charger counts per (station, type) for a fixed assignment.

    ``marginal_weight`` selects the cost rate weighting the marginal wait
    saving in the stop rule; "wait" matches the objective, "travel" is kept
    selectable for comparison. Raises :class:`InfeasibleError` when some pair
    cannot reach stability within its capacity.
    """
    if marginal_weight not in ("wait", "travel"):
        raise ValueError("marginal_weight must be 'wait' or 'travel'")
    rate = instance.wait_cost_rate if marginal_weight == "wait" else instance.travel_cost_rate
    loads = mdl.pair_loads(instance, assignment.triplets)
    out: dict[tuple[int, int], int] = {}
    for (j, k), load in sorted(loads.items()):
        cap = instance.station_cap(j, k)
        if max_per_pair is not None:
            cap = min(cap, max_per_pair)
        sized = size_pair(load, instance.type_by_id[k], cap, rate, instance.epsilon)
        if sized is None:
            raise InfeasibleError(
                f"station {j} type {k}: load {load:.6g} needs more than {cap} chargers"
            )
        out[(j, k)] = sized[0]
    return out


def build_solution(
    instance: mdl.Instance,
    assignment: AssignmentSet,
    chargers: Mapping[tuple[int, int], int],
    *,
    active: Iterable[int] | None = None,
) -> mdl.Solution:
    """Materialize a full Solution (waits and cost included) from its parts.

    Active stations default to exactly those receiving traffic; idle active
    stations only ever add cost.
    """
    if active is None:
        active = {j for (_, j, _) in assignment.triplets}
    sol = mdl.Solution(
        active=frozenset(active),
        assignments=assignment.triplets,
        chargers=dict(chargers),
        waits=mdl.compute_waits(instance, assignment.triplets, chargers),
    )
    cost = mdl.evaluate(instance, sol)
    return mdl.Solution(
        active=sol.active,
        assignments=sol.assignments,
        chargers=sol.chargers,
        waits=sol.waits,
        cost=cost,
    )
