import numpy as np
import pytest

from aerialbs.bcd import optimize
from aerialbs.init_traj import InitConfig, circular_init, circular_velocity
from aerialbs.model import Scenario, SystemParams, coverage, validate
from aerialbs.robust import (
    MedmOptions,
    UliErrorModel,
    apply_uli_error,
    lp_max_min_bound,
    min_excess,
    optimize_medm,
    optimize_wc,
    realized_coverage,
)
from aerialbs.schedule import rate_matrix

PARAMS = SystemParams.for_mission(30, 2.5e4)
CIRCLE = InitConfig(np.array([750.0, 750.0]), 120.0)


def small_scenario(seed, M=4):
    rng = np.random.default_rng(seed)
    users = list(zip(rng.uniform(450, 1050, (M, 2)), rng.uniform(2e7, 4e7, M)))
    return Scenario(1500.0, users, CIRCLE.start, circular_velocity(CIRCLE, PARAMS))


@pytest.fixture(scope="module")
def nominal():
    sc = small_scenario(0)
    return sc, optimize(sc, PARAMS, circular_init(CIRCLE, PARAMS, sc))


class TestErrorModel:
    def test_truncation(self, rng):
        err = UliErrorModel(10.0).sample(20_000, rng)
        assert np.hypot(*err.T).max() <= 30.0
        # truncation at 3 sigma keeps the per-axis spread a little under sigma
        assert 9.0 < err.std(axis=0).min() < 10.0
        assert np.abs(err.mean(axis=0)).max() < 0.3

    def test_default_bound_and_zero_sigma(self):
        assert UliErrorModel(5.0).d_th == 15.0
        assert np.all(UliErrorModel(0.0).sample(5) == 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            UliErrorModel(-1.0)
        with pytest.raises(ValueError):
            UliErrorModel(1.0, d_th=-2.0)

    def test_apply_keeps_demands(self, rng):
        sc = small_scenario(1)
        est, true = apply_uli_error(sc, UliErrorModel(5.0), rng)
        assert true is sc
        assert np.array_equal(est.demands, sc.demands)
        assert np.hypot(*(est.positions - sc.positions).T).max() <= 15.0


class TestWorstCase:
    def test_guarantee_over_sampled_errors(self, rng):
        est = small_scenario(2)
        d_th = 15.0
        rep = optimize_wc(est, PARAMS, circular_init(CIRCLE, PARAMS, est), d_th)
        assert rep.extra["d_th"] == d_th and rep.coverage > 0
        assert validate(rep.trajectory, rep.schedule, est, PARAMS).ok
        model = UliErrorModel(5.0, d_th)
        planned = np.array(rep.covered_set)
        for _ in range(1000):
            truth = est.positions + model.sample(est.M, rng)
            rho = realized_coverage(rep.trajectory, rep.schedule, est, PARAMS, truth)
            assert rho[planned].all()

    def test_padded_coverage_below_nominal(self, nominal):
        sc, rep = nominal
        padded = coverage(rep.trajectory, rep.schedule, sc, PARAMS, pad=30.0).delivered
        plain = coverage(rep.trajectory, rep.schedule, sc, PARAMS).delivered
        assert np.all(padded <= plain)


class TestMaxMin:
    def test_lp_bound_two_users(self):
        # one slot each worth 5 Mbit; demands 4 Mbit -> surplus 1 Mbit each
        r = np.array([[5.0, 0.0], [0.0, 5.0]]) * 1e6
        assert lp_max_min_bound(r, np.array([4e6, 4e6])) == pytest.approx(1e6, rel=1e-6)

    def test_lp_bound_shared_slot(self):
        # a single 6 Mbit slot split fractionally between two 1 Mbit demands
        r = np.array([[6.0], [6.0]]) * 1e6
        assert lp_max_min_bound(r, np.array([1e6, 1e6])) == pytest.approx(2e6, rel=1e-6)

    def test_medm_raises_min_excess(self, nominal):
        sc, warm = nominal
        S = warm.covered_set
        before = min_excess(warm.trajectory, warm.schedule, sc, S, PARAMS)
        rep = optimize_medm(sc, PARAMS, warm, options=MedmOptions(max_iterations=4))
        trace = rep.extra["eta_trace"]
        assert all(b >= a - 1.0 for a, b in zip(trace, trace[1:]))
        assert trace[-1] >= before - 1.0
        assert set(rep.covered_set) >= set(S)
        assert validate(rep.trajectory, rep.schedule, sc, PARAMS).ok
        r = rate_matrix(rep.trajectory, sc, PARAMS).r[S]
        assert trace[-1] <= lp_max_min_bound(r, sc.demands[S]) + 1.0

    def test_medm_respects_option_epsilon(self, nominal):
        sc, warm = nominal
        rep = optimize_medm(sc, PARAMS, warm, options=MedmOptions(epsilon=10.0, max_iterations=5))
        assert len(rep.iterations) == 1

    def test_medm_needs_covered_warm_start(self, nominal):
        sc, warm = nominal
        empty = type(warm)([], None, None, [], warm.termination, 0.0, sc.M)
        with pytest.raises(ValueError):
            optimize_medm(sc, PARAMS, empty)
