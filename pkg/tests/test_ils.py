import random

import pytest

from flashcrowd.exact import solve_exact
from flashcrowd.ils import (
    IlsParams,
    OperationalPlan,
    apply_move,
    constructive_phase,
    delay_candidates,
    inverse_move,
    merge_candidates,
    perturb,
    revert_move,
    rvnd,
    shift_candidates,
    solve,
    split_candidates,
    swap_candidates,
)
from flashcrowd.model import (
    Content,
    HIRABLE,
    OWNED,
    PlanningInstance,
    Request,
    Server,
    check_feasibility,
    evaluate,
)

from util_instances import random_midsize_instance, random_tiny_instance, tiny_instance_o1


def owned_ample_instance():
    servers = [
        Server(0, OWNED, storage=100, bandwidth=50, cost=0.0),
        Server(1, HIRABLE, storage=100, bandwidth=50, cost=3.0),
    ]
    contents = [Content(0, size=10, start=1, origin=0, copy_cost=1.0)]
    requests = [
        Request(0, 0, 1.0, {1: 10.0}, 2.0),
        Request(1, 0, 1.0, {2: 10.0}, 2.0),
    ]
    return PlanningInstance(servers, contents, requests, horizon=3, client_bandwidth=10)


class TestConstruction:
    def test_owned_coverage_means_zero_hires(self):
        plan = constructive_phase(owned_ample_instance(), random.Random(0))
        assert not plan.z_count
        assert plan.fin_cost == 0.0

    def test_construction_deterministic(self):
        inst = tiny_instance_o1()
        a = constructive_phase(inst, random.Random(7))
        b = constructive_phase(inst, random.Random(7))
        assert a.placements == b.placements
        assert a.total_cost() == b.total_cost()

    def test_peak_roughly_double_owned_capacity_hires(self):
        # Owned bandwidth covers half the peak-period demand.
        servers = [
            Server(0, OWNED, storage=200, bandwidth=10, cost=0.0),
            Server(1, HIRABLE, storage=200, bandwidth=40, cost=2.0),
        ]
        contents = [Content(0, size=10, start=1, origin=0, copy_cost=1.0)]
        requests = [
            Request(i, 0, 1.0, {2: 10.0}, 50.0) for i in range(4)
        ]
        inst = PlanningInstance(
            servers, contents, requests, horizon=4, client_bandwidth=10
        )
        plan = constructive_phase(inst, random.Random(1))
        # Backlog penalty dwarfs hiring, so construction must hire.
        assert plan.z_count

    def test_exported_solution_feasible_and_cost_consistent(self):
        rng = random.Random(3)
        for _ in range(20):
            inst = random_midsize_instance(rng)
            plan = constructive_phase(inst, random.Random(rng.randrange(1000)))
            sol = plan.to_solution()
            assert check_feasibility(inst, sol, "corrected") == []
            assert evaluate(inst, sol).total == pytest.approx(plan.total_cost(), rel=1e-9)


def o1_optimal_plan():
    """The corrected-mode optimum of the O1 fixture, loaded as a plan."""
    inst = tiny_instance_o1()
    plan = OperationalPlan(inst)
    plan.place(0, 1, 0, 1)
    plan.place(0, 2, 0, 2)
    plan.place(1, 1, 1, 2)
    plan.place(1, 2, 0, 3)
    return inst, plan


class TestRvnd:
    def test_returns_oracle_optimum_unchanged(self):
        inst, plan = o1_optimal_plan()
        _sol, cost = solve_exact(inst, mode="corrected")
        assert plan.total_cost() == pytest.approx(cost.total)
        before = dict(plan.placements)
        rvnd(plan, random.Random(0), IlsParams())
        assert plan.placements == before

    def test_descent_property(self):
        rng = random.Random(9)
        for _ in range(10):
            inst = random_midsize_instance(rng)
            plan = constructive_phase(inst, random.Random(5))
            start = plan.total_cost()
            rvnd(plan, random.Random(6), IlsParams())
            assert plan.total_cost() <= start + 1e-9

    def test_merge_improving_case(self):
        # Two tuples of the same (content, period) on two hired servers;
        # merging onto one drops a copy and a hire slot.
        servers = [
            Server(0, OWNED, storage=10, bandwidth=1, cost=0.0),
            Server(1, HIRABLE, storage=20, bandwidth=20, cost=2.0),
            Server(2, HIRABLE, storage=20, bandwidth=20, cost=2.0),
        ]
        contents = [Content(0, size=8, start=1, origin=0, copy_cost=3.0)]
        requests = [
            Request(0, 0, 1.0, {1: 4.0, 2: 4.0}, 1.0),
            Request(1, 0, 1.0, {1: 4.0, 2: 4.0}, 1.0),
        ]
        inst = PlanningInstance(
            servers, contents, requests, horizon=3, client_bandwidth=4,
        )
        plan = OperationalPlan(inst)
        plan.place(0, 1, 1, 2)
        plan.place(0, 2, 1, 3)
        plan.place(1, 1, 2, 2)
        plan.place(1, 2, 2, 3)
        before = plan.total_cost()
        merges = [
            mv
            for mv in merge_candidates(plan)
            if all(dest[0] == 1 for _sl, dest in mv.relocations)
        ]
        assert merges
        applied = apply_move(plan, merges[0])
        assert applied is not None and applied.delta < 0
        assert plan.total_cost() < before


class TestMoves:
    def plans(self, n=12, seed=2):
        rng = random.Random(seed)
        out = []
        for _ in range(n):
            inst = random_midsize_instance(rng)
            plan = constructive_phase(inst, random.Random(rng.randrange(10**6)))
            out.append(plan)
        return out

    def test_move_then_inverse_restores_everything(self):
        for plan in self.plans():
            rng = random.Random(4)
            pools = [
                shift_candidates(plan),
                swap_candidates(plan, rng, 0.05),
                split_candidates(plan),
                merge_candidates(plan),
                delay_candidates(plan, 1),
            ]
            for pool in pools:
                tried = 0
                for move in pool:
                    if tried >= 4:
                        break
                    before_place = dict(plan.placements)
                    before_cost = plan.total_cost()
                    applied = apply_move(plan, move)
                    if applied is None:
                        continue
                    tried += 1
                    inv = inverse_move(before_place, move)
                    inv_applied = apply_move(plan, inv)
                    assert inv_applied is not None, f"inverse of {move.kind} failed"
                    assert plan.placements == before_place
                    assert plan.total_cost() == pytest.approx(before_cost, abs=1e-9)

    def test_revert_restores_exactly(self):
        for plan in self.plans(n=6, seed=8):
            before_place = dict(plan.placements)
            before_cost = plan.cost_snapshot()
            moves = shift_candidates(plan) + delay_candidates(plan, 1)
            reverted = 0
            for move in moves:
                if reverted >= 6:
                    break
                applied = apply_move(plan, move)
                if applied is None:
                    continue
                revert_move(plan, applied)
                reverted += 1
                assert plan.placements == before_place
                assert plan.cost_snapshot() == before_cost

    def test_moves_preserve_feasibility(self):
        rng = random.Random(31)
        checked = 0
        plan_pool = self.plans(n=5, seed=13)
        for plan in plan_pool:
            inst = plan.inst
            pools = (
                shift_candidates(plan)
                + swap_candidates(plan, rng, 0.05)
                + split_candidates(plan)
                + merge_candidates(plan)
                + delay_candidates(plan, 1)
            )
            rng.shuffle(pools)
            for move in pools[:30]:
                applied = apply_move(plan, move)
                if applied is None:
                    continue
                checked += 1
                sol = plan.to_solution()
                assert check_feasibility(inst, sol, "corrected") == []
                assert evaluate(inst, sol).total == pytest.approx(
                    plan.total_cost(), rel=1e-9, abs=1e-9
                )
        assert checked >= 40


class TestPerturb:
    def test_level_zero_applies_one_move(self):
        inst = tiny_instance_o1()
        plan = constructive_phase(inst, random.Random(2))
        from flashcrowd.ils import SearchStats

        stats = SearchStats()
        perturb(plan, 0, random.Random(3), IlsParams(), stats)
        assert stats.perturbations == 1

    def test_perturb_feasibility_random_cases(self):
        rng = random.Random(17)
        for _ in range(15):
            inst = random_midsize_instance(rng)
            plan = constructive_phase(inst, random.Random(1))
            for level in (0, 1, 2):
                perturb(plan, level, random.Random(level), IlsParams())
                assert check_feasibility(inst, plan.to_solution(), "corrected") == []

    def test_perturb_deterministic(self):
        inst = random_midsize_instance(random.Random(21))
        a = constructive_phase(inst, random.Random(5))
        b = constructive_phase(inst, random.Random(5))
        perturb(a, 1, random.Random(9), IlsParams())
        perturb(b, 1, random.Random(9), IlsParams())
        assert a.placements == b.placements


class TestSolve:
    def test_o1_within_five_percent_of_oracle(self):
        inst = tiny_instance_o1()
        _sol, opt = solve_exact(inst, mode="corrected")
        hits = 0
        for seed in range(10):
            _s, cost, _stats = solve(inst, IlsParams(seed=seed))
            assert cost.total >= opt.total - 1e-9
            if cost.total <= opt.total * 1.05:
                hits += 1
        assert hits == 10

    def test_single_feasible_solution_found_exactly(self):
        servers = [Server(0, OWNED, storage=10, bandwidth=5, cost=0.0)]
        contents = [Content(0, size=5, start=1, origin=0, copy_cost=1.0)]
        requests = [Request(0, 0, 1.0, {1: 5.0}, 1.0)]
        inst = PlanningInstance(servers, contents, requests, horizon=1, client_bandwidth=5)
        sol, cost, _ = solve(inst, IlsParams(seed=0))
        assert cost.total == 1.0
        assert sol.tuples[0].served == {0: 5.0}

    def test_deterministic_given_seed(self):
        inst = random_midsize_instance(random.Random(40))
        a = solve(inst, IlsParams(seed=11))
        b = solve(inst, IlsParams(seed=11))
        assert a[1] == b[1]
        assert a[0].tuples == b[0].tuples
        assert a[0].hires == b[0].hires

    def test_more_restarts_never_worse(self):
        inst = random_midsize_instance(random.Random(41))
        base = solve(inst, IlsParams(iter_max=2, seed=3))[1].total
        more = solve(inst, IlsParams(iter_max=4, seed=3))[1].total
        assert more <= base + 1e-9

    def test_incumbents_feasible(self):
        inst = random_midsize_instance(random.Random(42))
        seen = []

        def cb(plan):
            seen.append(plan.to_solution())

        solve(inst, IlsParams(seed=5, level_max=2), incumbent_callback=cb)
        assert seen
        for sol in seen:
            assert check_feasibility(inst, sol, "corrected") == []
