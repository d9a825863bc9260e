import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerialbs.conic import solve
from aerialbs.init_traj import InitConfig, circular_init
from aerialbs.model import Schedule, SystemParams, total_bits, total_energy
from aerialbs.sca import (
    LocalPoint,
    Objective,
    SubproblemSpec,
    Variant,
    anchor_feasible,
    build_subproblem,
    extract_trajectory,
    rate_bound_coeffs,
    rate_lower_bound,
    slack_values,
    speed_lower_bound,
)
from aerialbs.schedule import rate_matrix, solve_scheduling

from conftest import make_scenario

PARAMS = SystemParams.for_mission(60, 2.5e4)


@pytest.fixture(scope="module")
def anchored():
    """Small feasible problem: the circle, its optimal schedule and covered set."""
    rng = np.random.default_rng(4)
    sc = make_scenario(rng.uniform(300, 1200, (4, 2)), rng.uniform(1e6, 2e7, 4), PARAMS)
    traj = circular_init(InitConfig.default(1500), PARAMS, sc)
    res = solve_scheduling(rate_matrix(traj, sc, PARAMS), sc.demands)
    return sc, traj, res.schedule, res.coverage.covered_set


class TestCoefficients:
    def test_overhead_values(self, params):
        local = LocalPoint(np.zeros((params.N + 1, 2)), np.ones((params.N + 1, 2)))
        sc = make_scenario([[0, 0]], [1e6], params)
        c = rate_bound_coeffs(local, sc, params)
        assert c.Bc[0, 0] == pytest.approx(np.log2(1001), rel=1e-12)
        assert c.Bc[0, 0] == pytest.approx(9.96723, abs=1e-5)
        assert c.A[0, 0] == pytest.approx(np.log2(np.e) * 1e7 / (1e4 * (1e4 + 1e7)), rel=1e-12)
        assert c.A[0, 0] == pytest.approx(1.441e-4, abs=5e-8)
        assert np.all(c.A > 0) and np.all(c.Bc > 0)

    def test_slope_vanishes_far_away(self, params):
        local = LocalPoint(np.full((params.N + 1, 2), 1e7), np.ones((params.N + 1, 2)))
        c = rate_bound_coeffs(local, make_scenario([[0, 0]], [1e6], params), params)
        assert c.A.max() < 1e-20


class TestBounds:
    def test_tight_at_expansion_point(self, params, scenario):
        traj = circular_init(InitConfig.default(1500), params)
        sched = Schedule.from_owner(np.arange(params.N) % scenario.M, scenario.M)
        c = rate_bound_coeffs(LocalPoint.from_trajectory(traj), scenario, params)
        for i in range(scenario.M):
            assert rate_lower_bound(traj.s, c, sched, i) == pytest.approx(
                total_bits(traj, sched, scenario, i, params), rel=1e-9)

    def test_global_lower_bound_sampled(self, params, scenario, rng):
        traj = circular_init(InitConfig.default(1500), params)
        sched = Schedule.from_owner(np.arange(params.N) % scenario.M, scenario.M)
        local = LocalPoint.from_trajectory(traj)
        for pad in (0.0, 25.0):
            c = rate_bound_coeffs(local, scenario, params, pad)
            # 10^4 sampled trajectories in total
            for _ in range(5000):
                s = traj.s + rng.normal(scale=rng.choice([5, 100, 600]), size=traj.s.shape)
                moved = type(traj)(s, traj.v, traj.a)
                i = int(rng.integers(scenario.M))
                got = total_bits(moved, sched, scenario, i, params, pad=pad)
                assert rate_lower_bound(s, c, sched, i) <= got * (1 + 1e-12)

    def test_zero_row(self, params, scenario):
        traj = circular_init(InitConfig.default(1500), params)
        c = rate_bound_coeffs(LocalPoint.from_trajectory(traj), scenario, params)
        assert rate_lower_bound(traj.s, c, Schedule.empty(scenario.M, params.N), 0) == 0.0

    def test_worst_case_dominated(self, params, scenario):
        traj = circular_init(InitConfig.default(1500), params)
        local = LocalPoint.from_trajectory(traj)
        nominal = rate_bound_coeffs(local, scenario, params)
        worst = rate_bound_coeffs(local, scenario, params, pad=30.0)
        assert np.all(worst.Bc < nominal.Bc)
        sched = Schedule.from_owner(np.arange(params.N) % scenario.M, scenario.M)
        for i in range(scenario.M):
            assert rate_lower_bound(traj.s, worst, sched, i) <= rate_lower_bound(traj.s, nominal, sched, i)

    def test_speed_examples(self):
        assert speed_lower_bound([3, 4], [3, 4]) == 25
        assert speed_lower_bound([0, 0], [3, 4]) == -25

    @given(st.tuples(*[st.floats(-100, 100)] * 4))
    def test_speed_bound_below_square(self, vals):
        v, vl = np.array(vals[:2]), np.array(vals[2:])
        assert speed_lower_bound(v, vl) <= v @ v + 1e-9


class TestSubproblem:
    def test_anchor_is_feasible_and_solve_extracts(self, anchored):
        sc, traj, sched, covered = anchored
        spec = SubproblemSpec(sched, covered, LocalPoint.from_trajectory(traj))
        assert anchor_feasible(traj, spec, sc, PARAMS)
        prog = build_subproblem(spec, sc, PARAMS)
        sol = solve(prog, tol=1e-7)
        assert sol.usable
        out = extract_trajectory(sol, prog, sc, PARAMS)
        ds, dv = out.recursion_residuals(PARAMS.delta_t)
        assert ds < 1e-6 and dv < 1e-6
        assert total_energy(out, PARAMS) <= PARAMS.E_tot * (1 + 1e-6)
        assert out.speeds[1:].min() >= PARAMS.v_min - 1e-6
        tau = slack_values(sol, prog, sc)["tau"]
        assert np.all(tau >= PARAMS.v_min - 1e-6)
        psi = speed_lower_bound(out.v[1:], traj.v[1:])
        assert np.all(tau**2 <= psi + 1e-3)
        # covered users stay covered under the true rates
        for i in covered:
            assert total_bits(out, sched, sc, i, PARAMS) >= sc.demands[i] - 1.0

    def test_empty_candidate_set_has_no_rate_rows(self, anchored):
        sc, traj, sched, covered = anchored
        local = LocalPoint.from_trajectory(traj)
        empty = build_subproblem(SubproblemSpec(sched, (), local), sc, PARAMS)
        full = build_subproblem(SubproblemSpec(sched, covered, local), sc, PARAMS)
        assert empty.n < full.n
        assert solve(empty, tol=1e-7).usable

    def test_zero_padding_worst_case_equals_nominal(self, anchored):
        sc, traj, sched, covered = anchored
        local = LocalPoint.from_trajectory(traj)
        a = build_subproblem(SubproblemSpec(sched, covered, local, variant=Variant.NOMINAL), sc, PARAMS)
        b = build_subproblem(SubproblemSpec(sched, covered, local, variant=Variant.WORST_CASE, pad=0.0), sc, PARAMS)
        assert a.dumps() == b.dumps()

    def test_dimension_mismatch(self, anchored):
        sc, traj, sched, covered = anchored
        bad = LocalPoint(traj.s[:-1], traj.v[:-1])
        with pytest.raises(ValueError):
            build_subproblem(SubproblemSpec(sched, covered, bad), sc, PARAMS)

    def test_negative_padding_rejected(self, anchored):
        sc, traj, sched, covered = anchored
        with pytest.raises(ValueError):
            SubproblemSpec(sched, covered, LocalPoint.from_trajectory(traj), pad=-1.0)

    def test_max_min_objective_builds(self, anchored):
        sc, traj, sched, covered = anchored
        spec = SubproblemSpec(sched, covered, LocalPoint.from_trajectory(traj), variant=Variant.MEDM,
                              objective=Objective.MAX_MIN_EXCESS)
        prog = build_subproblem(spec, sc, PARAMS)
        sol = solve(prog, tol=1e-7)
        assert sol.usable and slack_values(sol, prog, sc)["eta_bits"] >= -1.0
