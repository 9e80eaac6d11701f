import dataclasses
import math

import pytest

from chargeplan.construction import AssignmentSet, build_solution
from chargeplan.errors import InvalidSOCError, UnassignedDemandError, UnstableQueueError
from chargeplan.model import (
    CandidateStation,
    ChargerType,
    DemandPoint,
    Solution,
    check_feasibility,
    derive_service_rates,
    evaluate,
    instance_from_dict,
    instance_to_dict,
    make_instance,
)

from gen import random_instance


@pytest.fixture()
def unit_instance():
    """One demand (0.5/min), one station (cost 5), one type (mu=1, cost 1),
    travel 2 min, unit cost rates."""
    kt = ChargerType(id=0, power_kw=100.0, unit_cost_rate=1.0, recharge_time_min=1.0)
    dp = DemandPoint(id=0, lat=41.88, lon=-87.68, rate=0.5)
    st = CandidateStation(id=0, lat=41.9, lon=-87.7, fixed_cost_rate=5.0, max_chargers={0: 5})
    return make_instance(
        [dp], [st], [kt], travel_cost_rate=1.0, wait_cost_rate=1.0, travel={(0, 0): 2.0}
    )


def solution_with(instance, chargers):
    return build_solution(instance, AssignmentSet(frozenset({(0, 0, 0)})), chargers)


class TestEvaluate:
    def test_single_charger_total(self, unit_instance):
        sol = solution_with(unit_instance, {(0, 0): 1})
        c = sol.cost
        assert c.total == pytest.approx(8.0, abs=1e-12)
        assert c.station == 5.0 and c.charger == 1.0
        assert c.travel == pytest.approx(1.0) and c.waiting == pytest.approx(1.0)
        assert sol.waits[(0, 0)] == pytest.approx(2.0)

    def test_two_charger_total(self, unit_instance):
        sol = solution_with(unit_instance, {(0, 0): 2})
        assert sol.cost.total == pytest.approx(8.0 + 8.0 / 15.0, abs=1e-9)
        assert sol.waits[(0, 0)] == pytest.approx(16.0 / 15.0, abs=1e-12)

    def test_idle_station_costs_only_fixed_rate(self):
        kt = ChargerType(id=0, power_kw=100.0, unit_cost_rate=1.0, recharge_time_min=1.0)
        st = CandidateStation(id=0, lat=41.9, lon=-87.7, fixed_cost_rate=5.0, max_chargers={0: 5})
        inst = make_instance([], [st], [kt], travel_cost_rate=1.0, wait_cost_rate=1.0, travel={})
        sol = Solution(active=frozenset({0}), assignments=frozenset(), chargers={}, waits={})
        c = evaluate(inst, sol)
        assert c.total == 5.0 and c.charger == 0.0 and c.waiting == 0.0

    def test_missing_assignment_raises(self, unit_instance):
        sol = Solution(active=frozenset({0}), assignments=frozenset(), chargers={}, waits={})
        with pytest.raises(UnassignedDemandError):
            evaluate(unit_instance, sol)

    def test_unstable_pair_raises(self, unit_instance):
        # no chargers but routed traffic
        sol = Solution(
            active=frozenset({0}),
            assignments=frozenset({(0, 0, 0)}),
            chargers={},
            waits={},
        )
        with pytest.raises(UnstableQueueError):
            evaluate(unit_instance, sol)

    def test_duplicate_assignment_rejected(self, unit_instance):
        sol = Solution(
            active=frozenset({0}),
            assignments=frozenset({(0, 0, 0), (0, 0, 1)}),
            chargers={(0, 0): 1},
            waits={},
        )
        with pytest.raises(ValueError):
            evaluate(unit_instance, sol)

    def test_deterministic_bit_identical(self):
        inst = random_instance(42)
        from chargeplan.exact import brute_force

        sol = brute_force(inst).best
        a = evaluate(inst, sol)
        b = evaluate(inst, sol)
        assert a == b  # dataclass equality covers every float bit-for-bit

    def test_total_is_sum_of_parts(self):
        for seed in range(5):
            inst = random_instance(seed)
            from chargeplan.exact import brute_force

            try:
                sol = brute_force(inst).best
            except Exception:
                continue
            c = sol.cost
            assert c.total == pytest.approx(c.station + c.charger + c.travel + c.waiting, abs=1e-9)

    def test_waiting_at_least_service_floor(self):
        for seed in range(5):
            inst = random_instance(seed)
            from chargeplan.exact import brute_force

            try:
                sol = brute_force(inst).best
            except Exception:
                continue
            floor = sum(
                inst.demand_by_id[i].rate * inst.wait_cost_rate / inst.type_by_id[k].service_rate
                for (i, j, k) in sol.assignments
            )
            assert sol.cost.waiting >= floor - 1e-12

    def test_convex_in_charger_count(self, unit_instance):
        # fixed assignment: second differences of total over s are nonnegative
        totals = [solution_with(unit_instance, {(0, 0): s}).cost.total for s in range(1, 6)]
        diffs = [b - a for a, b in zip(totals, totals[1:])]
        assert all(d2 >= d1 - 1e-12 for d1, d2 in zip(diffs, diffs[1:]))


class TestCheckFeasibility:
    def test_feasible_solution_is_clean(self, unit_instance):
        sol = solution_with(unit_instance, {(0, 0): 1})
        assert check_feasibility(unit_instance, sol) == []

    def test_inactive_station_flagged(self, unit_instance):
        good = solution_with(unit_instance, {(0, 0): 1})
        bad = dataclasses.replace(good, active=frozenset())
        codes = {v.code for v in check_feasibility(unit_instance, bad)}
        assert "inactive_station" in codes

    def test_stability_margin_violation(self):
        # load 1.0 onto one unit-rate charger: 1 * 1 * (1 - eps) < 1.0
        kt = ChargerType(id=0, power_kw=100.0, unit_cost_rate=1.0, recharge_time_min=1.0)
        dp = DemandPoint(id=0, lat=41.88, lon=-87.68, rate=1.0)
        st = CandidateStation(id=0, lat=41.9, lon=-87.7, fixed_cost_rate=5.0, max_chargers={0: 5})
        inst = make_instance(
            [dp], [st], [kt], travel_cost_rate=1.0, wait_cost_rate=1.0, travel={(0, 0): 2.0}
        )
        sol = Solution(
            active=frozenset({0}),
            assignments=frozenset({(0, 0, 0)}),
            chargers={(0, 0): 1},
            waits={(0, 0): 1.0},
        )
        codes = {v.code for v in check_feasibility(inst, sol)}
        assert "unstable_queue" in codes

    def test_understated_wait_flagged(self, unit_instance):
        good = solution_with(unit_instance, {(0, 0): 1})
        bad = dataclasses.replace(good, waits={(0, 0): 1.5})  # true wait is 2.0
        codes = {v.code for v in check_feasibility(unit_instance, bad)}
        assert "wait_too_low" in codes

    def test_multi_source_flagged(self):
        kts = [
            ChargerType(id=0, power_kw=100.0, unit_cost_rate=1.0, recharge_time_min=1.0),
            ChargerType(id=1, power_kw=200.0, unit_cost_rate=2.0, recharge_time_min=0.5),
        ]
        dp = DemandPoint(id=0, lat=41.88, lon=-87.68, rate=0.5)
        st = CandidateStation(id=0, lat=41.9, lon=-87.7, fixed_cost_rate=5.0, max_chargers={0: 5, 1: 5})
        inst = make_instance(
            [dp], [st], kts, travel_cost_rate=1.0, wait_cost_rate=1.0, travel={(0, 0): 2.0}
        )
        doubled = Solution(
            active=frozenset({0}),
            assignments=frozenset({(0, 0, 0), (0, 0, 1)}),
            chargers={(0, 0): 1, (0, 1): 1},
            waits={},
        )
        codes = {v.code for v in check_feasibility(inst, doubled)}
        assert "not_single_sourced" in codes
        dangling = Solution(active=frozenset({0}), assignments=frozenset(), chargers={}, waits={})
        codes = {v.code for v in check_feasibility(inst, dangling)}
        assert "not_single_sourced" in codes

    def test_charger_cap_flagged(self, unit_instance):
        good = solution_with(unit_instance, {(0, 0): 1})
        bad = dataclasses.replace(good, chargers={(0, 0): 99})
        codes = {v.code for v in check_feasibility(unit_instance, bad)}
        assert "charger_limit" in codes

    def test_proximity_violation_when_enforced(self):
        kt = ChargerType(id=0, power_kw=100.0, unit_cost_rate=1.0, recharge_time_min=1.0)
        dp = DemandPoint(id=0, lat=41.88, lon=-87.68, rate=0.5)
        near = CandidateStation(id=0, lat=41.9, lon=-87.7, fixed_cost_rate=5.0, max_chargers={0: 5})
        far = CandidateStation(id=1, lat=41.6, lon=-87.9, fixed_cost_rate=5.0, max_chargers={0: 5})
        inst = make_instance(
            [dp], [near, far], [kt],
            travel_cost_rate=1.0, wait_cost_rate=1.0,
            travel={(0, 0): 2.0, (0, 1): 20.0},
            enforce_proximity=True,
        )
        sol = build_solution(
            inst, AssignmentSet(frozenset({(0, 1, 0)})), {(1, 0): 1}, active={0, 1}
        )
        codes = {v.code for v in check_feasibility(inst, sol)}
        assert "not_closest_active" in codes
        # assigned to the closest: clean
        sol2 = build_solution(
            inst, AssignmentSet(frozenset({(0, 0, 0)})), {(0, 0): 1}, active={0, 1}
        )
        assert check_feasibility(inst, sol2) == []

    def test_cross_validated_against_independent_predicates(self):
        # feasibility == conjunction of separately coded constraint predicates
        from chargeplan.exact import brute_force
        from chargeplan.model import pair_loads
        from chargeplan.queueing import QueueModel, expected_wait

        for seed in range(8):
            inst = random_instance(seed)
            try:
                sol = brute_force(inst).best
            except Exception:
                continue

            def activation_ok():
                return all(j in sol.active for (_, j, _) in sol.assignments)

            def single_source_ok():
                ids = [i for (i, _, _) in sol.assignments]
                return sorted(ids) == sorted(d.id for d in inst.demand_points)

            def stability_ok():
                loads = pair_loads(inst, sol.assignments)
                return all(
                    inst.type_by_id[k].service_rate * sol.chargers.get((j, k), 0) * (1 - inst.epsilon)
                    >= lam
                    for (j, k), lam in loads.items()
                )

            def waits_ok():
                loads = pair_loads(inst, sol.assignments)
                for (j, k), s in sol.chargers.items():
                    if s > 0:
                        true = expected_wait(
                            QueueModel(loads.get((j, k), 0.0), inst.type_by_id[k].service_rate, s)
                        )
                        if sol.waits[(j, k)] < true - 1e-9:
                            return False
                return True

            clean = not check_feasibility(inst, sol)
            assert clean == (activation_ok() and single_source_ok() and stability_ok() and waits_ok())
            assert clean


class TestDeriveServiceRates:
    def test_fast_charger(self):
        (kt,) = derive_service_rates(
            440.0, 10.0, 80.0, [ChargerType(0, 450.0, 1.0, 1.0)]
        )
        assert kt.recharge_time_min == pytest.approx(41.0666667, abs=1e-4)
        assert kt.service_rate == pytest.approx(0.024351, abs=1e-6)

    def test_slow_charger(self):
        (kt,) = derive_service_rates(
            440.0, 10.0, 80.0, [ChargerType(0, 125.0, 1.0, 1.0)]
        )
        assert kt.recharge_time_min == pytest.approx(147.84, abs=1e-9)
        assert kt.service_rate == pytest.approx(0.0067641, abs=1e-7)

    def test_degenerate_window_rejected(self):
        with pytest.raises(InvalidSOCError):
            derive_service_rates(440.0, 50.0, 50.0, [ChargerType(0, 450.0, 1.0, 1.0)])
        with pytest.raises(InvalidSOCError):
            derive_service_rates(440.0, 80.0, 10.0, [ChargerType(0, 450.0, 1.0, 1.0)])
        with pytest.raises(InvalidSOCError):
            derive_service_rates(440.0, -5.0, 80.0, [ChargerType(0, 450.0, 1.0, 1.0)])

    def test_rate_is_reciprocal(self):
        kts = derive_service_rates(
            300.0, 20.0, 90.0, [ChargerType(0, 50.0, 1.0, 1.0), ChargerType(1, 350.0, 1.0, 1.0)]
        )
        for kt in kts:
            assert kt.service_rate * kt.recharge_time_min == pytest.approx(1.0, rel=1e-15)


class TestInstanceSchema:
    def test_round_trip(self):
        inst = random_instance(7)
        data = instance_to_dict(inst)
        again = instance_from_dict(data)
        assert instance_to_dict(again) == data

    def test_reachability_is_inverse_image(self):
        inst = random_instance(3)
        for d in inst.demand_points:
            for j in d.reachable:
                assert d.id in inst.station_by_id[j].served
        for s in inst.stations:
            for i in s.served:
                assert s.id in inst.demand_by_id[i].reachable

    def test_travel_entries_cover_reachable_pairs(self):
        inst = random_instance(9)
        for d in inst.demand_points:
            for j in d.reachable:
                assert math.isfinite(inst.travel[(d.id, j)])
