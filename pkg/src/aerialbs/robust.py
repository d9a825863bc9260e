"""Robustness to user location errors.

Worst case: every horizontal distance is padded by the error bound ``d_th``,
so a user covered under padded rates stays covered for any error within the
bound (triangle inequality).

Minimum excess data (MEDM): with the covered set frozen, all slots go to
covered users and the smallest surplus ``R_m - Q_m`` is maximized by
alternating an exact max-min slot assignment and a trajectory step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .bcd import BcdOptions, IterationRecord, SolveReport, Termination, _Context, optimize, trajectory_feasible
from .conic import Cone, ConicProgram
from .conic import solve as conic_solve
from .model import DEMAND_ATOL_BITS, Scenario, Schedule, SystemParams, Trajectory, coverage, total_energy
from .sca import LocalPoint, Objective, SubproblemSpec, Variant, extract_trajectory
from .schedule import ScheduleOptions, _Budget, rate_matrix, subset_feasible

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UliErrorModel:
    """Per-axis Gaussian location error truncated to a disc of radius ``d_th``."""

    sigma: float
    d_th: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.d_th is None:
            object.__setattr__(self, "d_th", 3.0 * self.sigma)
        if self.d_th < 0:
            raise ValueError("error bound must be non-negative")

    def sample(self, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """``count`` error vectors, redrawn until each lies within ``d_th``."""
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        if self.sigma == 0:
            return np.zeros((count, 2))
        out = np.empty((count, 2))
        todo = np.arange(count)
        while todo.size:
            draw = rng.normal(0.0, self.sigma, (todo.size, 2))
            ok = np.hypot(draw[:, 0], draw[:, 1]) <= self.d_th
            out[todo[ok]] = draw[ok]
            todo = todo[~ok]
        return out


def apply_uli_error(scenario: Scenario, model: UliErrorModel,
                    rng: np.random.Generator | None = None) -> tuple[Scenario, Scenario]:
    """Return ``(estimated, true)``; estimated positions are the true ones plus a bounded error."""
    err = model.sample(scenario.M, rng)
    return scenario.with_positions(scenario.positions + err), scenario


def min_excess(traj: Trajectory, sched: Schedule, scenario: Scenario, S, params: SystemParams,
               pad: float = 0.0, positions=None) -> float:
    """Smallest delivered-minus-demanded bits over the users in ``S``."""
    S = list(S)
    if not S:
        raise ValueError("covered set is empty")
    got = coverage(traj, sched, scenario, params, pad=pad, positions=positions).delivered
    return float(np.min(got[S] - scenario.demands[S]))


def optimize_wc(estimated: Scenario, params: SystemParams, init: Trajectory, d_th: float,
                options: BcdOptions | None = None, technique: str = "WC") -> SolveReport:
    """Block coordinate descent with every distance padded by ``d_th``."""
    options = replace(options or BcdOptions(), pad=float(d_th))
    report = optimize(estimated, params, init, options, technique=technique, variant=Variant.WORST_CASE)
    report.extra["d_th"] = float(d_th)
    return report


def realized_coverage(traj, sched, scenario, params, true_positions) -> np.ndarray:
    """Coverage flags when the users actually sit at ``true_positions``."""
    return coverage(traj, sched, scenario, params, positions=true_positions).rho


def lp_max_min_bound(r, q) -> float:
    """Largest smallest surplus the fractional relaxation allows (bits); bounds the integer value."""
    k, n = r.shape
    scale = float(q.max())
    nv = k * n
    # x = [alpha (k*n), slot slack (n), surplus slack (k), eta+ , eta-]
    total = nv + n + k + 2
    rows, cols, vals = [], [], []
    for slot in range(n):
        rows += [slot] * (k + 1)
        cols += [i * n + slot for i in range(k)] + [nv + slot]
        vals += [1.0] * (k + 1)
    for i in range(k):
        row = n + i
        rows += [row] * (n + 3)
        cols += [i * n + j for j in range(n)] + [nv + n + i, total - 2, total - 1]
        vals += list(r[i] / scale) + [-1.0, -1.0, 1.0]
    b = np.concatenate([np.ones(n), q / scale])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n + k, total))
    c = np.zeros(total)
    c[-2], c[-1] = -1.0, 1.0
    sol = conic_solve(ConicProgram(total, c, A, b, (Cone("nonneg", 0, total),)), tol=1e-9)
    if not sol.usable:
        raise RuntimeError(f"max-min relaxation returned {sol.status.value}")
    return float(sol.x[-2] - sol.x[-1]) * scale


def _max_min_assignment(r, q, S, incumbent_owner, options: ScheduleOptions, node_limit: int,
                        rel_tol: float = 1e-4):
    """Slot owners within ``S`` maximizing the smallest surplus; never worse than the incumbent.

    Bisection on the surplus level between the incumbent and the relaxation
    bound, each level checked by the exact slot-assignment search.  Levels
    left undecided within the node budget count as infeasible.
    """
    S = list(S)
    rs, qs = r[S], q[S]

    def surplus(owner):
        got = np.array([r[i, owner == i].sum() for i in S])
        return float(np.min(got - qs))

    best_owner = incumbent_owner.copy()
    lo = surplus(best_owner)
    hi = lp_max_min_bound(rs, qs) + DEMAND_ATOL_BITS
    tol = max(DEMAND_ATOL_BITS, rel_tol * abs(lo))
    probe = replace(options, use_lp=False, exact=True)
    deadline = time.monotonic() + options.timeout_s
    while hi - lo > tol and time.monotonic() < deadline:
        mid = 0.5 * (lo + hi)
        # one extra bit absorbs the demand tolerance inside the feasibility check
        res = subset_feasible(S, r, q + mid + DEMAND_ATOL_BITS, probe, _Budget(deadline, node_limit))
        if res.feasible:
            owner = _fill_within(res.owner, r, q, S)
            lo = max(mid, surplus(owner))
            if surplus(owner) >= surplus(best_owner):
                best_owner = owner
        else:
            hi = mid
    return best_owner, surplus(best_owner)


def _fill_within(owner, r, q, S):
    """Give idle slots to the covered user with the smallest surplus that can use them."""
    owner = owner.copy()
    S = np.asarray(list(S))
    got = np.array([r[i, owner == i].sum() for i in S]) - q[S]
    for slot in np.flatnonzero(owner < 0):
        usable = r[S, slot] > 0
        if not usable.any():
            owner[slot] = int(S[np.argmax(r[S, slot])])
            continue
        k = int(np.argmin(np.where(usable, got, np.inf)))
        owner[slot] = int(S[k])
        got[k] += r[S[k], slot]
    return owner


@dataclass
class MedmOptions:
    epsilon: float = 1e-3
    max_iterations: int = 20
    node_limit: int = 5000
    bcd: BcdOptions = field(default_factory=BcdOptions)


def optimize_medm(scenario: Scenario, params: SystemParams, warm: SolveReport, epsilon: float | None = None,
                  options: MedmOptions | None = None, technique: str = "MEDM") -> SolveReport:
    """Refine a covered solution by maximizing the smallest surplus over its covered set."""
    options = options or MedmOptions()
    if epsilon is not None:
        options = replace(options, epsilon=epsilon)
    S = tuple(sorted(warm.covered_set))
    if not S or warm.trajectory is None:
        raise ValueError("MEDM needs a warm start with a non-empty covered set")
    start = time.perf_counter()
    ctx = _Context(scenario, params, options.bcd)
    traj, sched = warm.trajectory, warm.schedule
    owner = sched.owner()
    # start from an assignment that keeps every slot within S
    owner = np.where(np.isin(owner, S), owner, -1)
    r0 = rate_matrix(traj, scenario, params).r
    owner = _fill_within(owner, r0, scenario.demands, S)
    sched = Schedule.from_owner(owner, scenario.M)
    eta = min_excess(traj, sched, scenario, S, params)
    trace = [eta]
    records = []
    termination = Termination.MAX_ITERATIONS
    for it in range(1, options.max_iterations + 1):
        t0 = time.perf_counter()
        r = rate_matrix(traj, scenario, params).r
        owner, _ = _max_min_assignment(r, scenario.demands, S, sched.owner(), options.bcd.schedule,
                                       options.node_limit, rel_tol=0.1 * options.epsilon)
        sched = Schedule.from_owner(owner, scenario.M)
        after_schedule = min_excess(traj, sched, scenario, S, params)
        spec = SubproblemSpec(sched, S, LocalPoint.from_trajectory(traj), variant=Variant.MEDM,
                              objective=Objective.MAX_MIN_EXCESS)
        prog, sol = ctx.solve(spec)
        statuses = [f"medm:{sol.status.value}"]
        new_traj = traj
        if sol.usable:
            cand = extract_trajectory(sol, prog, scenario, params)
            if not trajectory_feasible(cand, scenario, params):
                statuses.append("medm:rejected")
            elif min_excess(cand, sched, scenario, S, params) >= after_schedule:
                new_traj = cand
            else:
                log.warning("MEDM trajectory step lowered the surplus; keeping previous iterate")
        traj = new_traj
        new_eta = min_excess(traj, sched, scenario, S, params)
        cov = coverage(traj, sched, scenario, params)
        records.append(IterationRecord(it, cov.covered_count, list(cov.covered_set), total_energy(traj, params),
                                       new_eta, len(S), list(S), statuses, False, time.perf_counter() - t0))
        gain = (new_eta - eta) / max(abs(eta), DEMAND_ATOL_BITS)
        trace.append(new_eta)
        log.info("MEDM iteration %d: min excess %.0f bits (gain %.2e)", it, new_eta, gain)
        eta = new_eta
        if gain < options.epsilon:
            termination = Termination.CONVERGED
            break
    cov = coverage(traj, sched, scenario, params)
    return SolveReport(records, traj, sched, list(cov.covered_set), termination, time.perf_counter() - start,
                       scenario.M, warm.coverage, technique,
                       {"eta_trace": trace, "covered_set_frozen": list(S), "conic_solves": ctx.solves})
