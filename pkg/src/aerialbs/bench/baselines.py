"""Static aerial base station fixed above the area center."""

from __future__ import annotations

import time

import numpy as np

from ..model import DEMAND_ATOL_BITS, RateConvention, Scenario, SystemParams, snr
from ..schedule import RateMatrix, ScheduleOptions, solve_scheduling
from .metrics import MetricsRow


def static_rates(scenario: Scenario, params: SystemParams, position=None) -> RateMatrix:
    """Per-slot bits for a UAV parked at ``position`` (default: area center)."""
    pos = scenario.center if position is None else np.asarray(position, float)
    per_slot = np.log2(1.0 + snr(pos, scenario.positions, params)) * params.bits_factor
    return RateMatrix(np.repeat(per_slot[:, None], params.N, axis=1))


def static_tdma_baseline(scenario: Scenario, params: SystemParams, options: ScheduleOptions | None = None,
                         seed: int = -1) -> MetricsRow:
    """Exact slot scheduling on the constant rate matrix; propulsion energy is not counted."""
    start = time.perf_counter()
    res = solve_scheduling(static_rates(scenario, params), scenario.demands, options)
    covered = res.coverage.covered_set
    excess = res.coverage.delivered[list(covered)] - scenario.demands[list(covered)] if covered else []
    return MetricsRow("static-TDMA", seed, params.T, params.E_tot, covered=len(covered), M=scenario.M,
                      energy_used=0.0, iterations=0,
                      min_excess=float(np.min(excess)) if len(excess) else float("nan"),
                      termination=f"gap={res.bound_gap}", wall_time=time.perf_counter() - start)


def fdma_bits(scenario: Scenario, params: SystemParams, position=None) -> np.ndarray:
    """Bits each user gets on a ``B/M`` sub-band held for the whole mission."""
    pos = scenario.center if position is None else np.asarray(position, float)
    eff = np.log2(1.0 + snr(pos, scenario.positions, params))
    duration = params.T if params.rate_convention is RateConvention.PHYSICAL else 1.0
    return params.B / scenario.M * duration * eff


def static_fdma_baseline(scenario: Scenario, params: SystemParams, seed: int = -1) -> MetricsRow:
    start = time.perf_counter()
    got = fdma_bits(scenario, params)
    ok = got >= scenario.demands - DEMAND_ATOL_BITS
    excess = (got - scenario.demands)[ok]
    return MetricsRow("static-FDMA", seed, params.T, params.E_tot, covered=int(ok.sum()), M=scenario.M,
                      energy_used=0.0, iterations=0,
                      min_excess=float(excess.min()) if excess.size else float("nan"),
                      termination="closed_form", wall_time=time.perf_counter() - start)
