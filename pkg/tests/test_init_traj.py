import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerialbs.init_traj import (
    InitConfig,
    InitKind,
    build_init,
    circle_speed,
    circular_init,
    designed_init,
    designed_path,
    path_length,
    polar_angle,
    polar_order,
    resample,
)
from aerialbs.model import SystemParams, validate

from conftest import make_scenario

CENTER = np.array([750.0, 750.0])


def at_angles(degrees, radius=300.0):
    rad = np.radians(degrees)
    return CENTER + radius * np.column_stack([np.cos(rad), np.sin(rad)])


class TestCircle:
    def test_speed_and_acceleration(self, params):
        cfg = InitConfig.default(1500)
        assert circle_speed(cfg.radius, params) == pytest.approx(23.56, abs=5e-3)
        traj = circular_init(cfg, params)
        assert np.allclose(traj.speeds, traj.speeds[0])
        # the discrete circle is flown slightly faster than the continuous one
        assert traj.speeds[0] == pytest.approx(2 * math.pi * 375 / 100, rel=1e-3)
        acc = np.linalg.norm(traj.a, axis=1)
        assert acc.max() == pytest.approx(23.56**2 / 375, rel=2e-3)
        assert acc.max() <= params.a_max

    def test_base_and_recursions(self, params):
        traj = circular_init(InitConfig.default(1500), params)
        assert np.allclose(traj.s[0], [1125, 750]) and np.allclose(traj.s[-1], [1125, 750])
        ds, dv = traj.recursion_residuals(params.delta_t)
        assert ds < 1e-9 and dv < 1e-9
        r = np.linalg.norm(traj.s - CENTER, axis=1)
        assert np.allclose(r, 375.0)

    def test_too_fast_circle_rejected(self):
        p = SystemParams.for_mission(10, 2.5e4)
        with pytest.raises(ValueError):
            circular_init(InitConfig.default(1500), p)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            InitConfig(CENTER, 0.0)


class TestPolarOrder:
    def test_sorted_by_angle(self):
        sc = make_scenario(at_angles([350, 10, 200]), [1e6] * 3)
        assert list(polar_order(sc, CENTER)) == [1, 2, 0]

    def test_tie_prefers_smaller_radius(self):
        pos = np.array([CENTER + [0, 400], CENTER + [0, 100]])
        sc = make_scenario(pos, [1e6, 1e6])
        assert list(polar_order(sc, CENTER)) == [1, 0]

    def test_single_user(self):
        assert list(polar_order(make_scenario(at_angles([45]), [1e6]), CENTER)) == [0]

    def test_angle_range(self):
        ang, _ = polar_angle(at_angles([0, 90, 180, 270]), CENTER)
        assert np.allclose(ang, np.radians([360, 90, 180, 270]))
        ang, r = polar_angle([CENTER], CENTER)
        assert ang[0] == 0.0 and r[0] == 0.0

    @given(st.lists(st.tuples(st.floats(0, 1500), st.floats(0, 1500)), min_size=1, max_size=12),
           st.randoms(use_true_random=False))
    def test_permutation_and_input_order_invariance(self, pts, rnd):
        pts = np.array(pts)
        order = polar_order(make_scenario(pts, [1e6] * len(pts)), CENTER)
        assert sorted(order) == list(range(len(pts)))
        perm = list(range(len(pts)))
        rnd.shuffle(perm)
        order2 = polar_order(make_scenario(pts[perm], [1e6] * len(pts)), CENTER)
        assert np.array_equal(pts[perm][order2], pts[order])


class TestDesigned:
    def test_single_user_length(self, params):
        sc = make_scenario([[375, 750]], [1e6], params)
        assert path_length(designed_path(sc, InitConfig.default(1500))) == pytest.approx(1500.0)

    def test_collinear_doubles_back(self, params):
        sc = make_scenario([[900, 750], [600, 750], [300, 750]], [1e6] * 3, params)
        assert path_length(designed_path(sc, InitConfig.default(1500))) == pytest.approx(2 * (1125 - 300))

    def test_samples_and_boundary(self, params, scenario):
        traj = designed_init(scenario, InitConfig.default(1500), params)
        assert traj.s.shape == (params.N + 1, 2)
        assert np.allclose(traj.s[0], scenario.base_pos) and np.allclose(traj.s[-1], scenario.base_pos)
        ds, dv = traj.recursion_residuals(params.delta_t)
        assert ds < 1e-6 and dv < 1e-6

    def test_kinematics_pass_validate(self, params, scenario):
        traj = designed_init(scenario, InitConfig.default(1500), params)
        rep = validate(traj, None, scenario, params)
        assert not {"position_recursion", "velocity_recursion", "start_position", "end_position"} & rep.kinds()

    def test_resampled_spacing(self, params, scenario):
        path = designed_path(scenario, InitConfig.default(1500))
        pts = resample(path, params.N)
        assert np.allclose(pts[0], path[0]) and np.allclose(pts[-1], path[-1])
        # corner cutting can only shorten the sampled polyline
        assert path_length(pts) <= path_length(path) * (1 + 1e-9)

    def test_resample_l_path(self):
        path = np.array([[0.0, 0.0], [30.0, 0.0], [30.0, 10.0]])
        pts = resample(path, 4)
        assert np.allclose(pts, [[0, 0], [10, 0], [20, 0], [30, 0], [30, 10]])
        assert path_length(path) == pytest.approx(40.0)

    def test_build_init_dispatch(self, params, scenario):
        assert np.allclose(build_init(InitKind.CIRCULAR, scenario, params).s[0], scenario.base_pos)
        assert build_init("designed", scenario, params).N == params.N

