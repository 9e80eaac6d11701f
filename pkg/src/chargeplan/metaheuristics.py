"""Simulated annealing and a genetic algorithm over station-activation space.

Both methods move through subsets of active stations; for each candidate
subset the demand assignment is sampled (closest station with an exploration
probability of a random one), charger counts are sized optimally for that
assignment, and the exact objective is evaluated. Candidates whose sizing is
infeasible cost infinity and are never recorded as incumbents.

A multi-run driver launches independently seeded runs and reports the best,
plus how many distinct final objective values the runs produced.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, replace

from . import model as mdl
from .construction import (
    AssignmentSet,
    best_chargers,
    build_solution,
    cover_sets,
    covers_all_demands,
    demand_assignment,
    feasible_activation,
    min_stations,
)
from .errors import InfeasibleError
from .exact import SolverReport, compute_gap, root_lower_bound

_TEMP_FLOOR = 1e-12
_TOGGLE_LIMIT = 200_000


@dataclass(frozen=True)
class SAParams:
    """Simulated-annealing knobs. ``initial_temperature=None`` scales the
    start temperature to a tenth of the initial objective value."""

    initial_temperature: float | None = None
    max_iterations: int = 5000
    cooling_factor: float = 0.9
    assignment_randomness: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.cooling_factor <= 1.0:
            raise ValueError("cooling_factor must lie in (0, 1]")
        if not 0.0 <= self.assignment_randomness <= 1.0:
            raise ValueError("assignment_randomness must lie in [0, 1]")


@dataclass(frozen=True)
class GAParams:
    """Genetic-algorithm knobs."""

    population_size: int = 30
    tournament_fraction: float = 0.3
    assignment_randomness: float = 0.1
    max_iterations: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 < self.tournament_fraction <= 1.0:
            raise ValueError("tournament_fraction must lie in (0, 1]")
        if not 0.0 <= self.assignment_randomness <= 1.0:
            raise ValueError("assignment_randomness must lie in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def _try_candidate(instance: mdl.Instance, active: frozenset[int], randomness: float, rng: random.Random):
    """Sample an assignment for an activation set and size it; returns
    (cost, solution) with cost = inf when sizing is infeasible."""
    try:
        assignment = demand_assignment(instance, active, randomness, rng)
        chargers = best_chargers(instance, assignment)
        sol = build_solution(instance, assignment, chargers, active=active)
        return sol.cost.total, sol
    except InfeasibleError:
        return math.inf, None


def _strip_idle(solution: mdl.Solution) -> mdl.Solution:
    """Drop activations with no traffic before reporting; they only add cost."""
    used = frozenset(j for (_, j, _) in solution.assignments)
    if used == solution.active:
        return solution
    return mdl.Solution(
        active=used,
        assignments=solution.assignments,
        chargers=solution.chargers,
        waits=solution.waits,
        cost=None,
    )


def simulated_annealing(
    instance: mdl.Instance,
    params: SAParams,
    time_limit: float | None = None,
) -> SolverReport:
    """Station-toggling SA with Metropolis acceptance and linear cooling.

    Starts from the greedy minimum cover. Each iteration flips one random
    station (re-flipping until the activation covers every demand through
    admissible stations), samples an assignment, and sizes the chargers.
    Improvements over the incumbent are always kept; otherwise the candidate
    replaces the current state with probability exp((current - new) / T).
    The temperature follows T *= (1 - C * T0 / L) clamped at a tiny floor.
    """
    t0 = time.perf_counter()
    rng = random.Random(params.seed)
    station_ids = [s.id for s in instance.stations]

    def walk_to_feasible(active: set[int]) -> frozenset[int]:
        """One random toggle, repeated until the activation covers every
        demand through admissible stations (the first flip may be undone)."""
        attempts = 0
        while True:
            j = station_ids[rng.randrange(len(station_ids))]
            if j in active:
                active.discard(j)
            else:
                active.add(j)
            if active and feasible_activation(instance, active):
                return frozenset(active)
            attempts += 1
            if attempts > _TOGGLE_LIMIT:
                raise InfeasibleError("random walk could not reach a feasible activation")

    current = frozenset(min_stations(instance))
    cur_cost, cur_sol = _try_candidate(instance, current, params.assignment_randomness, rng)
    retries = 0
    while cur_sol is None:
        # the greedy cover admits no stable sizing for this draw; keep
        # walking activation space until one sizes
        retries += 1
        if retries > 1000:
            raise InfeasibleError("no activation with a stable charger sizing found")
        current = walk_to_feasible(set(current))
        cur_cost, cur_sol = _try_candidate(instance, current, params.assignment_randomness, rng)

    best_sol, best_cost = cur_sol, cur_cost
    time_to_best = time.perf_counter() - t0
    temp0 = params.initial_temperature if params.initial_temperature is not None else 0.1 * cur_cost
    temp = max(temp0, _TEMP_FLOOR)
    factor = 1.0 - params.cooling_factor * temp0 / params.max_iterations
    clamp_events = 0
    trace: list[tuple[int, float]] = [(0, best_cost)]
    iterations = 0
    terminated = "optimality"

    for it in range(1, params.max_iterations + 1):
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            terminated = "time"
            break
        iterations = it
        cand = walk_to_feasible(set(current))
        cand_cost, cand_sol = _try_candidate(instance, cand, params.assignment_randomness, rng)

        if cand_cost < best_cost:
            best_sol, best_cost = cand_sol, cand_cost
            current, cur_cost = cand, cand_cost
            time_to_best = time.perf_counter() - t0
            trace.append((it, best_cost))
        else:
            if cand_cost <= cur_cost:
                current, cur_cost = cand, cand_cost
            else:
                # cand_cost may be inf; exp(-inf) is a clean 0
                m = math.exp((cur_cost - cand_cost) / temp)
                if rng.random() < m:
                    current, cur_cost = cand, cand_cost
        new_temp = temp * factor
        if new_temp < _TEMP_FLOOR:
            new_temp = _TEMP_FLOOR
            clamp_events += 1
        temp = new_temp

    best_sol = _strip_idle(best_sol)
    best_sol = build_solution(
        instance,
        _assignment_of(best_sol),
        best_sol.chargers,
        active=best_sol.active,
    )
    lower = root_lower_bound(instance)
    total = best_sol.cost.total
    lower = min(lower, total)
    return SolverReport(
        best=best_sol,
        lower_bound=lower,
        upper_bound=total,
        gap=compute_gap(lower, total) if total > 0 else 0.0,
        nodes_explored=iterations,
        cuts_added=0,
        time_to_best=time_to_best,
        terminated_by=terminated,
        stats={"clamp_events": clamp_events, "incumbent_trace": trace},
    )


def _assignment_of(sol: mdl.Solution) -> AssignmentSet:
    return AssignmentSet(sol.assignments)


@dataclass
class _Chromosome:
    active: frozenset[int]
    cost: float
    solution: mdl.Solution | None


def genetic_algorithm(
    instance: mdl.Instance,
    params: GAParams,
    time_limit: float | None = None,
) -> SolverReport:
    """Cover-set GA: tournament selection, positional crossover, coverage
    repair, parental charger-type inheritance, and worst-replacement.

    The initial population consists of minimum (or minimum plus one) covers.
    Crossover copies the activation genes of parent 1 for the first half of
    the station ordering and of parent 2 for the rest; uncovered offspring
    activate random stations until they cover. Offspring inherit a parent's
    charger type wherever the parent routed the same demand to the same
    station. An offspring replaces the worst chromosome unless it is strictly
    worse, in which case it still does so with probability worst/new.
    """
    t0 = time.perf_counter()
    rng = random.Random(params.seed)
    station_order = [s.id for s in instance.stations]
    first_half = set(station_order[: len(station_order) // 2])

    covers = cover_sets(instance, params.population_size)
    population: list[_Chromosome] = []
    idx = 0
    while len(population) < params.population_size:
        # fewer distinct covers than N: cycle them with fresh assignment
        # draws so the initial charger-type patterns stay diverse
        active = covers[idx % len(covers)]
        idx += 1
        cost, sol = _try_candidate(instance, frozenset(active), params.assignment_randomness, rng)
        population.append(_Chromosome(frozenset(active), cost, sol))

    def fittest(chroms: list[_Chromosome]) -> _Chromosome:
        return min(chroms, key=lambda c: (c.cost, sorted(c.active)))

    incumbent = fittest(population)
    best_sol, best_cost = incumbent.solution, incumbent.cost
    time_to_best = time.perf_counter() - t0
    iterations = 0
    terminated = "optimality"

    for it in range(1, params.max_iterations + 1):
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            terminated = "time"
            break
        iterations = it

        pool_size = max(2, math.ceil(params.tournament_fraction * len(population)))
        pool_size = min(pool_size, len(population))
        pool_idx = rng.sample(range(len(population)), pool_size)
        ranked = sorted(pool_idx, key=lambda i: (population[i].cost, i))
        p1 = population[ranked[0]]
        p2 = population[ranked[1]] if len(ranked) > 1 else p1

        child_active = {j for j in p1.active if j in first_half}
        child_active |= {j for j in p2.active if j not in first_half}
        inactive = [j for j in station_order if j not in child_active]
        while not (child_active and covers_all_demands(instance, child_active)):
            if not inactive:
                break
            j = inactive.pop(rng.randrange(len(inactive)))
            child_active.add(j)
        child = frozenset(child_active)

        try:
            assignment = demand_assignment(instance, child, params.assignment_randomness, rng)
            inherited = set()
            p1_types = {(i, j): k for (i, j, k) in (p1.solution.assignments if p1.solution else ())}
            p2_types = {(i, j): k for (i, j, k) in (p2.solution.assignments if p2.solution else ())}
            for (i, j, k) in assignment.triplets:
                if j in first_half and j in p1.active and (i, j) in p1_types:
                    inherited.add((i, j, p1_types[(i, j)]))
                elif j not in first_half and j in p2.active and (i, j) in p2_types:
                    inherited.add((i, j, p2_types[(i, j)]))
                else:
                    inherited.add((i, j, k))
            assignment = AssignmentSet(frozenset(inherited))
            chargers = best_chargers(instance, assignment)
            child_sol = build_solution(instance, assignment, chargers, active=child)
            child_cost = child_sol.cost.total
        except InfeasibleError:
            child_sol, child_cost = None, math.inf

        worst_idx = max(range(len(population)), key=lambda i: (population[i].cost, i))
        worst_cost = population[worst_idx].cost
        offspring = _Chromosome(child, child_cost, child_sol)
        if child_cost < best_cost:
            best_sol, best_cost = child_sol, child_cost
            time_to_best = time.perf_counter() - t0
            population[worst_idx] = offspring
        elif child_cost > worst_cost:
            m = worst_cost / child_cost if child_cost > 0 else 0.0
            if math.isinf(child_cost) and math.isinf(worst_cost):
                m = 1.0
            if rng.random() < m:
                population[worst_idx] = offspring
        else:
            population[worst_idx] = offspring

    if best_sol is None:
        raise InfeasibleError("no cover admits a stable charger sizing")
    best_sol = _strip_idle(best_sol)
    best_sol = build_solution(
        instance, _assignment_of(best_sol), best_sol.chargers, active=best_sol.active
    )
    lower = root_lower_bound(instance)
    total = best_sol.cost.total
    lower = min(lower, total)
    return SolverReport(
        best=best_sol,
        lower_bound=lower,
        upper_bound=total,
        gap=compute_gap(lower, total) if total > 0 else 0.0,
        nodes_explored=iterations,
        cuts_added=0,
        time_to_best=time_to_best,
        terminated_by=terminated,
        stats={"population_size": len(population)},
    )


@dataclass(frozen=True)
class MultiRunResult:
    """Best-of-n report plus the consistency statistics across runs."""

    best: SolverReport
    run_costs: tuple[float, ...]
    distinct_objectives: int
    run_times_to_best: tuple[float, ...]


def multi_run(
    instance: mdl.Instance,
    method: str,
    params: SAParams | GAParams,
    n_runs: int,
    base_seed: int | None = None,
    time_limit: float | None = None,
) -> MultiRunResult:
    """Launch ``n_runs`` independent runs seeded base_seed + 0..n-1 and keep
    the cheapest result. Runs share only the immutable instance, so they may
    execute in any order; they are executed sequentially here for exact
    reproducibility of the aggregate.

    ``distinct_objectives`` counts the distinct final objective values across
    runs after rounding to 1e-6.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if method not in ("sa", "ga"):
        raise ValueError("method must be 'sa' or 'ga'")
    seed0 = params.seed if base_seed is None else base_seed
    reports = []
    for r in range(n_runs):
        run_params = replace(params, seed=seed0 + r)
        if method == "sa":
            reports.append(simulated_annealing(instance, run_params, time_limit))
        else:
            reports.append(genetic_algorithm(instance, run_params, time_limit))
    best_idx = min(range(n_runs), key=lambda r: (reports[r].upper_bound, r))
    costs = tuple(r.upper_bound for r in reports)
    distinct = len({round(c, 6) for c in costs})
    best = reports[best_idx]
    stats = dict(best.stats)
    stats.pop("incumbent_trace", None)
    stats.update({"run_costs": list(costs), "distinct_objectives": distinct, "n_runs": n_runs})
    best = SolverReport(
        best=best.best,
        lower_bound=best.lower_bound,
        upper_bound=best.upper_bound,
        gap=best.gap,
        nodes_explored=best.nodes_explored,
        cuts_added=best.cuts_added,
        time_to_best=best.time_to_best,
        terminated_by=best.terminated_by,
        stats=stats,
    )
    return MultiRunResult(
        best=best,
        run_costs=costs,
        distinct_objectives=distinct,
        run_times_to_best=tuple(r.time_to_best for r in reports),
    )
