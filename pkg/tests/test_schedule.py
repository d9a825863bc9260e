import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerialbs.model import Trajectory
from aerialbs.schedule import RateMatrix, ScheduleOptions, _lp_refutes, rate_matrix, solve_scheduling, subset_feasible

from conftest import make_scenario

MBIT = 1e6


def brute_force_best(r, q):
    """Largest number of users served over every (M+1)^N slot assignment."""
    M, N = r.shape
    owners = np.array(list(itertools.product(range(-1, M), repeat=N)))
    got = np.zeros((owners.shape[0], M))
    for i in range(M):
        got[:, i] = ((owners == i) * r[i]).sum(axis=1)
    return int((got >= q - 1.0).sum(axis=1).max())


def brute_force_feasible(r, q, subset):
    M, N = r.shape
    subset = list(subset)
    if not subset:
        return True
    for owner in itertools.product([-1] + subset, repeat=N):
        owner = np.array(owner)
        if all((r[i] * (owner == i)).sum() >= q[i] - 1.0 for i in subset):
            return True
    return False


instances = st.integers(1, 3).flatmap(lambda M: st.integers(1, 7).flatmap(lambda N: st.tuples(
    st.lists(st.lists(st.integers(0, 6), min_size=N, max_size=N), min_size=M, max_size=M),
    st.lists(st.integers(1, 14), min_size=M, max_size=M))))


class TestExamples:
    def test_two_by_two(self):
        res = solve_scheduling(np.array([[5, 1], [1, 5]]) * MBIT, [4 * MBIT, 4 * MBIT])
        assert res.coverage.covered_count == 2 and res.bound_gap == 0
        assert list(res.schedule.owner()) == [0, 1]
        assert brute_force_best(np.array([[5, 1], [1, 5]]), np.array([4, 4])) == 2
        assert subset_feasible([0, 1], np.array([[5, 1], [1, 5]]) * MBIT, [4 * MBIT] * 2).feasible

    def test_infeasible_demands(self):
        r = np.array([[1, 1], [2, 0]]) * MBIT
        res = solve_scheduling(r, [5 * MBIT, 3 * MBIT], fill_idle=False)
        assert res.coverage.covered_count == 0
        assert np.all(res.schedule.owner() == -1)

    def test_single_user(self):
        r = np.array([[1.0, 3.0, 2.0]]) * MBIT
        assert solve_scheduling(r, [5.5 * MBIT]).coverage.covered_count == 1
        assert solve_scheduling(r, [6.5 * MBIT]).coverage.covered_count == 0
        assert list(solve_scheduling(r, [1 * MBIT]).schedule.owner()) == [0, 0, 0]

    def test_empty_set(self):
        res = subset_feasible([], np.ones((2, 3)), [1, 1])
        assert res.feasible and np.all(res.owner == -1)

    def test_nonpositive_demand_rejected(self):
        with pytest.raises(ValueError):
            solve_scheduling(np.ones((1, 2)), [0.0])

    def test_tie_break_by_capacity_slack(self):
        # users 0 and 1 compete for the single slot; user 1 leaves more slack
        r = np.array([[5.0], [9.0]]) * MBIT
        res = solve_scheduling(r, [4 * MBIT, 4 * MBIT])
        assert res.coverage.covered_count == 1 and bool(res.coverage.rho[1])


class TestRateMatrix:
    def test_static_over_user_constant_row(self, params):
        p = params.with_(N=6)
        traj = Trajectory(np.tile([300.0, 300.0], (7, 1)), np.tile([5.0, 0.0], (7, 1)), np.zeros((6, 2)))
        sc = make_scenario([[300, 300], [900, 300]], [1e6, 1e6], p)
        r = rate_matrix(traj, sc, p).r
        assert r.shape == (2, 6)
        assert np.allclose(r[0], r[0, 0]) and r[0, 0] > r[1, 0]

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            RateMatrix(np.array([[1.0, -1.0]]))


class TestProperties:
    @given(instances)
    def test_exact_matches_enumeration(self, inst):
        r, q = np.array(inst[0], float) * MBIT, np.array(inst[1], float) * MBIT
        res = solve_scheduling(r, q, ScheduleOptions(exact=True))
        assert res.bound_gap == 0
        assert res.coverage.covered_count == brute_force_best(r, q)
        assert res.schedule.exclusive()

    @given(instances)
    def test_subset_verdicts_match_enumeration(self, inst):
        r, q = np.array(inst[0], float) * MBIT, np.array(inst[1], float) * MBIT
        M = r.shape[0]
        for k in range(M + 1):
            for subset in itertools.combinations(range(M), k):
                res = subset_feasible(subset, r, q)
                assert res.feasible == brute_force_feasible(r, q, subset)
                if res.feasible:
                    for i in subset:
                        assert (r[i] * (res.owner == i)).sum() >= q[i] - 1.0

    @given(instances)
    def test_downward_closure(self, inst):
        r, q = np.array(inst[0], float) * MBIT, np.array(inst[1], float) * MBIT
        M = r.shape[0]
        ok = {s for k in range(M + 1) for s in itertools.combinations(range(M), k)
              if subset_feasible(s, r, q).feasible}
        for s in ok:
            for k in range(len(s)):
                assert all(sub in ok for sub in itertools.combinations(s, k))

    @given(instances)
    def test_relaxation_refutation_is_sound(self, inst):
        r, q = np.array(inst[0], float) * MBIT, np.array(inst[1], float) * MBIT
        if r.shape[0] < 2:
            return
        if _lp_refutes(r, q) is not None:
            assert not brute_force_feasible(r, q, range(r.shape[0]))

    def test_heuristic_reports_gap_honestly(self, rng):
        for _ in range(20):
            r = rng.integers(0, 6, (3, 6)) * MBIT
            q = rng.integers(1, 12, 3) * MBIT
            res = solve_scheduling(r, q, ScheduleOptions(exact=False))
            best = brute_force_best(r, q)
            assert res.coverage.covered_count <= best <= res.coverage.covered_count + res.bound_gap


def milp_feasible(r, q):
    """Reference verdict from scipy's mixed-integer solver."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    k, n = r.shape
    slot_rows = np.zeros((n, k * n))
    demand_rows = np.zeros((k, k * n))
    for i in range(k):
        slot_rows[np.arange(n), i * n + np.arange(n)] = 1.0
        demand_rows[i, i * n:(i + 1) * n] = r[i] / q[i]
    res = milp(np.zeros(k * n), integrality=np.ones(k * n), bounds=Bounds(0, 1),
               constraints=[LinearConstraint(slot_rows, 0, 1), LinearConstraint(demand_rows, 1 - 1 / q, np.inf)])
    return {0: True, 2: False}[res.status]


def test_tight_near_uniform_partitions(rng):
    # slowly varying rates make covering every user a tight partition problem
    decided = 0
    for _ in range(25):
        n = int(rng.integers(20, 60))
        base = rng.uniform(2e6, 4.5e6, (5, 1))
        r = base * (1 + 0.15 * np.sin(rng.uniform(0, 6.28, (5, 1)) + np.linspace(0, 3, n)[None, :]))
        q = r.sum(axis=1) / 5 * rng.uniform(0.85, 1.05, 5)
        truth = milp_feasible(r, q)
        got = subset_feasible(range(5), r, q, ScheduleOptions(timeout_s=1.0)).feasible
        if truth:
            assert got is True
        if got is not None:
            decided += 1
            assert got == truth
    assert decided >= 20
