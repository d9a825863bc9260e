import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerialbs.model import (
    RateConvention,
    Scenario,
    Schedule,
    SystemParams,
    Trajectory,
    bits_per_slot,
    coverage,
    distance,
    min_mission_energy,
    power_optimal_speed,
    propulsion_power,
    snr,
    total_bits,
    total_energy,
    validate,
)

from conftest import make_scenario

coord = st.floats(-2000, 2000, allow_nan=False)


def straight_line(params, speed=30.0):
    N = params.N
    a = np.zeros((N, 2))
    return Trajectory.from_accelerations((0.0, 0.0), (speed, 0.0), a, params.delta_t)


class TestChannel:
    def test_distance_overhead(self):
        assert distance((0, 0), (0, 0), 100.0) == 100.0

    def test_distance_three_four_five(self):
        assert distance((0, 0), (300, 400), 100.0) == pytest.approx(math.sqrt(260000), rel=1e-12)

    def test_distance_tends_to_altitude(self):
        assert distance((0, 0), (3, 4), 1e9) == pytest.approx(1e9, rel=1e-12)

    def test_distance_rejects_nonpositive_altitude(self):
        with pytest.raises(ValueError):
            distance((0, 0), (1, 1), 0.0)

    def test_overhead_snr(self, params):
        assert params.zeta0 == pytest.approx(1e9, rel=1e-12)
        assert snr((5, 5), (5, 5), params) == pytest.approx(1000.0, rel=1e-12)

    def test_snr_quarter_at_three_h_squared(self, params):
        d = math.sqrt(3) * params.H
        assert snr((0, 0), (d, 0), params) == pytest.approx(250.0, rel=1e-12)

    def test_zero_power_zero_snr(self, params):
        assert snr((0, 0), (10, 0), params.with_(P=0.0)) == 0.0

    def test_bits_overhead_physical(self, params):
        assert bits_per_slot((0, 0), (0, 0), params) == pytest.approx(1e6 * 0.5 * math.log2(1001), rel=1e-12)
        assert bits_per_slot((0, 0), (0, 0), params) == pytest.approx(4.9836e6, rel=1e-4)

    def test_bits_overhead_literal(self, params):
        lit = params.with_(rate_convention=RateConvention.PAPER_LITERAL)
        assert bits_per_slot((0, 0), (0, 0), lit) == pytest.approx(9.9672e6, rel=1e-4)

    def test_zero_snr_zero_bits(self, params):
        assert bits_per_slot((0, 0), (0, 0), params.with_(P=0.0)) == 0.0

    def test_pad_lengthens_distance(self, params):
        assert snr((0, 0), (30, 40), params, pad=50.0) == pytest.approx(snr((0, 0), (100, 0), params))

    @given(coord, coord, st.floats(0.1, 500))
    def test_rate_strictly_decreasing_in_distance(self, x, y, extra):
        p = SystemParams()
        d = math.hypot(x, y)
        near = bits_per_slot((0, 0), (x, y), p)
        far_pt = (x * (d + extra) / d, y * (d + extra) / d) if d > 0 else (extra, 0.0)
        assert bits_per_slot((0, 0), far_pt, p) < near


class TestBits:
    def test_additivity(self, params):
        p = params.with_(N=4)
        traj = Trajectory.from_accelerations((0, 0), (0, 10), np.zeros((4, 2)), p.delta_t)
        sc = make_scenario([[0, 0]], [1e6], p)
        single = bits_per_slot(traj.s[1], sc.positions[0], p)
        assert total_bits(traj, Schedule.empty(1, 4), sc, 0, p) == 0.0
        assert total_bits(traj, Schedule.from_owner([0, -1, -1, -1], 1), sc, 0, p) == pytest.approx(single)

    def test_three_equidistant_slots(self, params):
        p = params.with_(N=3)
        # a circle about the user keeps the distance fixed
        ang = np.linspace(0, 2 * np.pi, 4)
        s = 500 + 100 * np.column_stack([np.cos(ang), np.sin(ang)])
        sc = make_scenario([[500, 500]], [1e6], p)
        v = np.zeros((4, 2))
        traj = Trajectory(s, v, np.zeros((3, 2)))
        one = bits_per_slot(s[1], (500, 500), p)
        assert total_bits(traj, Schedule.from_owner([0, 0, 0], 1), sc, 0, p) == pytest.approx(3 * one)

    def test_dimension_mismatch(self, params, scenario):
        traj = straight_line(params)
        with pytest.raises(ValueError):
            total_bits(traj, Schedule.empty(scenario.M, params.N - 1), scenario, 0, params)

    def test_coverage_idempotent(self, params, scenario):
        traj = straight_line(params)
        sched = Schedule.from_owner(np.arange(params.N) % scenario.M, scenario.M)
        a = coverage(traj, sched, scenario, params)
        b = coverage(traj, sched, scenario, params)
        assert np.array_equal(a.rho, b.rho) and a.covered_count == b.covered_count
        assert a.covered_count == int(a.rho.sum())


class TestEnergy:
    def test_power_at_thirty(self, params):
        assert propulsion_power((30, 0), (0, 0), params) == pytest.approx(100.002, rel=1e-6)

    def test_power_at_vmax(self, params):
        assert propulsion_power((80, 0), (0, 0), params) == pytest.approx(474.112 + 28.125, rel=1e-6)

    def test_heading_invariance(self, params):
        assert propulsion_power((0, 30), (0, 0), params) == propulsion_power((30, 0), (0, 0), params)

    def test_zero_speed_rejected(self, params):
        with pytest.raises(ValueError):
            propulsion_power((0, 0), (1, 0), params)

    def test_power_optimal_speed_grid(self, params):
        grid = np.linspace(3, 80, 77001)
        power = propulsion_power(np.column_stack([grid, 0 * grid]), np.zeros((grid.size, 2)), params)
        assert grid[np.argmin(power)] == pytest.approx(30.0, abs=0.1)
        assert power_optimal_speed(params) == pytest.approx(grid[np.argmin(power)], abs=1e-3)

    def test_straight_line_energy(self, params):
        assert total_energy(straight_line(params), params) == pytest.approx(10000.2, rel=1e-6)

    def test_doubling_slots_doubles_energy(self, params):
        p2 = params.with_(N=2 * params.N)
        assert total_energy(straight_line(p2), p2) == pytest.approx(2 * total_energy(straight_line(params), params))

    def test_mission_lower_bound(self, params):
        assert min_mission_energy(params) == pytest.approx(100.002 * 100, rel=1e-4)
        assert min_mission_energy(params) <= total_energy(straight_line(params), params)


class TestValidation:
    def test_circle_passes(self, params, scenario):
        from aerialbs.init_traj import InitConfig, circular_init
        traj = circular_init(InitConfig.default(1500), params)
        assert validate(traj, None, scenario, params).ok

    def test_exclusivity(self, params, scenario):
        from aerialbs.init_traj import InitConfig, circular_init
        traj = circular_init(InitConfig.default(1500), params)
        alpha = np.zeros((scenario.M, params.N), bool)
        alpha[0, 3] = alpha[1, 3] = True
        rep = validate(traj, Schedule(alpha), scenario, params)
        assert rep.of("exclusivity")[0].index == 4

    def test_boundary(self, params, scenario):
        rep = validate(straight_line(params), None, scenario, params)
        assert {"start_position", "end_position"} <= rep.kinds()

    def test_recursion_violation(self, params, scenario):
        traj = straight_line(params)
        s = traj.s.copy()
        s[5] += 0.01
        rep = validate(Trajectory(s, traj.v, traj.a), None, scenario, params)
        assert "position_recursion" in rep.kinds()

    @given(st.lists(st.tuples(st.floats(-6, 6), st.floats(-6, 6)), min_size=2, max_size=60))
    def test_integration_closes_recursions(self, acc):
        traj = Trajectory.from_accelerations((10.0, 20.0), (25.0, -3.0), np.array(acc), 0.5)
        ds, dv = traj.recursion_residuals(0.5)
        assert ds <= 1e-6 and dv <= 1e-6


class TestTypes:
    def test_user_outside_area(self, params):
        with pytest.raises(ValueError):
            make_scenario([[1600, 10]], [1e6], params)

    def test_nonpositive_demand(self, params):
        with pytest.raises(ValueError):
            make_scenario([[10, 10]], [0.0], params)

    def test_empty_scenario(self):
        with pytest.raises(ValueError):
            Scenario(1500, [], (0, 0), (1, 0))

    def test_params_invariants(self):
        with pytest.raises(ValueError):
            SystemParams(v_min=90.0)
        with pytest.raises(ValueError):
            SystemParams(N=1)

    def test_for_mission(self):
        p = SystemParams.for_mission(120, 2.5e4)
        assert p.N == 240 and p.T == 120.0 and p.E_tot == 2.5e4

    def test_schedule_owner_round_trip(self):
        owner = np.array([2, -1, 0, 0, 1])
        assert np.array_equal(Schedule.from_owner(owner, 3).owner(), owner)
        assert Schedule.from_owner(owner, 3).exclusive()
