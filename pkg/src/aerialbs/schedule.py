"""Exact user scheduling on a fixed trajectory.

Maximizes the number of users whose demand is met when every slot serves at
most one user.  Candidate covered sets are enumerated by decreasing size with
downward-closure pruning; each set is checked by a greedy assignment, a
surplus-balancing local search, a linear-relaxation refutation and, if all
are inconclusive, a depth-first branch and bound over slots.
"""

from __future__ import annotations

import itertools
import logging
import sys
import time
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .conic import Cone, ConicProgram
from .conic import solve as conic_solve
from .model import DEMAND_ATOL_BITS, CoverageResult, Scenario, Schedule, SystemParams, Trajectory, rate_rows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RateMatrix:
    """Bits each user would receive in each slot (``M x N``)."""

    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, float)
        if r.ndim != 2:
            raise ValueError("rate matrix must be 2-D")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rates must be finite and non-negative")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def shape(self):
        return self.r.shape


def rate_matrix(traj: Trajectory, scenario: Scenario, params: SystemParams, pad: float = 0.0,
                positions=None) -> RateMatrix:
    if traj.N != params.N:
        raise ValueError(f"trajectory has {traj.N} slots, params expect {params.N}")
    pos = scenario.positions if positions is None else positions
    return RateMatrix(rate_rows(traj, pos, params, pad))


@dataclass
class ScheduleOptions:
    exact: bool = True
    timeout_s: float = 30.0
    use_lp: bool = True
    node_limit: int | None = None


class Feasibility(NamedTuple):
    feasible: bool | None          # None: undecided within the budget
    owner: np.ndarray | None       # slot owner (-1 idle) when feasible
    certificate: np.ndarray | None  # LP Farkas multipliers when refuted by relaxation
    reason: str


class ScheduleResult(NamedTuple):
    schedule: Schedule
    coverage: CoverageResult
    bound_gap: int
    stats: dict


@dataclass
class _Budget:
    deadline: float = np.inf
    nodes: int | None = None
    used: int = 0
    exhausted: bool = False

    def tick(self) -> bool:
        self.used += 1
        if (self.nodes is not None and self.used > self.nodes) or \
                (self.used % 256 == 0 and time.monotonic() > self.deadline):
            self.exhausted = True
        return not self.exhausted


def _meets(got, need):
    return got >= need - DEMAND_ATOL_BITS


def _greedy(r, q, order, partial=False):
    """Serve the most critical unmet user in each slot; returns owner or None.

    With ``partial`` the assignment is returned even when some demand is unmet.
    """
    k, n = r.shape
    deficit = q.astype(float).copy()
    remaining = r.sum(axis=1)
    owner = -np.ones(n, int)
    for slot in order:
        remaining -= r[:, slot]
        open_ = (deficit > DEMAND_ATOL_BITS) & (r[:, slot] > 0)
        if not open_.any():
            continue
        # criticality: how much of the still reachable capacity the deficit needs
        crit = np.where(open_, deficit / np.maximum(remaining + r[:, slot], 1e-300), -np.inf)
        i = int(np.argmax(crit))
        owner[slot] = i
        deficit[i] -= r[i, slot]
    return owner if partial or np.all(deficit <= DEMAND_ATOL_BITS) else None


def _balance(owner, r, q, max_moves: int = 20000):
    """Local search raising the smallest normalized surplus; returns owner once every demand holds.

    Moves give a slot to the worst-off user, either from its owner or as a
    swap for one of the worst-off user's slots.  Each move strictly raises the
    bottleneck without pushing another user below it, so the search ends.
    """
    k, n = r.shape
    rn = r / q[:, None]
    owner = owner.copy()
    s = np.array([rn[i, owner == i].sum() for i in range(k)]) - 1.0
    tol = DEMAND_ATOL_BITS / q
    for _ in range(max_moves):
        i = int(np.argmin(s + tol))
        if s[i] >= -tol[i]:
            return owner
        cur = s[i]
        mine = np.flatnonzero(owner == i)
        others = np.flatnonzero(owner != i)
        if others.size == 0:
            return None
        h = owner[others]
        taken = h >= 0
        hs = np.maximum(h, 0)
        after_h = np.where(taken, s[hs] - rn[hs, others], np.inf)
        val = np.minimum(cur + rn[i, others], after_h)
        j = int(np.argmax(val))
        best_val, move = val[j], (others[j], -1)
        oa, ha = others[taken], h[taken]
        if mine.size and oa.size:
            new_i = cur + rn[i, oa][:, None] - rn[i, mine][None, :]
            new_h = (s[ha] - rn[ha, oa])[:, None] + rn[ha[:, None], mine[None, :]]
            v = np.minimum(new_i, new_h)
            a, b = np.unravel_index(int(np.argmax(v)), v.shape)
            if v[a, b] > best_val:
                best_val, move = v[a, b], (oa[a], mine[b])
        if best_val <= cur + 1e-15:
            return None
        ja, jb = move
        ha_ = owner[ja]
        if ha_ >= 0:
            s[ha_] -= rn[ha_, ja]
        s[i] += rn[i, ja]
        owner[ja] = i
        if jb >= 0:
            s[i] -= rn[i, jb]
            s[ha_] += rn[ha_, jb]
            owner[jb] = ha_
    return None


def _lp_refutes(r, q):
    """Solve the fractional relaxation; return Farkas multipliers if it is infeasible.

    Variables are ``alpha >= 0`` plus slacks; ``alpha <= 1`` follows from the slot rows.
    """
    k, n = r.shape
    scale = 1.0 / q
    nv = k * n
    # x = [alpha (k*n), slot slack (n), demand surplus (k)]
    rows, cols, vals = [], [], []
    b = []
    # slot rows: sum_i alpha_in + s_n = 1
    for slot in range(n):
        rows.extend([slot] * (k + 1))
        cols.extend([i * n + slot for i in range(k)] + [nv + slot])
        vals.extend([1.0] * (k + 1))
        b.append(1.0)
    # demand rows: sum_n r_in alpha_in / q_i - e_i = 1 (minus tolerance)
    for i in range(k):
        row = n + i
        nz = np.flatnonzero(r[i] > 0)
        rows.extend([row] * (nz.size + 1))
        cols.extend(list(i * n + nz) + [nv + n + i])
        vals.extend(list(r[i, nz] * scale[i]) + [-1.0])
        b.append(1.0 - DEMAND_ATOL_BITS * scale[i])
    total = nv + n + k
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(b), total))
    prog = ConicProgram(total, np.zeros(total), A, np.array(b), (Cone("nonneg", 0, total),))
    sol = conic_solve(prog, tol=1e-9)
    if sol.status == "primal_infeasible" and sol.certificate_residual <= 1e-7:
        return sol.certificate
    return None


def _branch_and_bound(r, q, order, budget: _Budget):
    k, n = r.shape
    rs = r[:, order]
    suffix = np.concatenate([np.cumsum(rs[:, ::-1], axis=1)[:, ::-1], np.zeros((k, 1))], axis=1)
    smax = np.concatenate([np.cumsum(rs.max(axis=0)[::-1])[::-1], [0.0]])
    deficit = q.astype(float) - DEMAND_ATOL_BITS
    pick = -np.ones(n, int)

    def dfs(pos):
        if not budget.tick():
            return False
        open_ = deficit > 0
        if not open_.any():
            return True
        if pos == n:
            return False
        if np.any(suffix[open_, pos] < deficit[open_]) or smax[pos] < deficit[open_].sum():
            return False
        col = rs[:, pos]
        cand = np.flatnonzero(open_ & (col > 0))
        # most critical users first
        crit = deficit[cand] / suffix[cand, pos]
        for i in cand[np.argsort(-crit, kind="stable")]:
            deficit[i] -= col[i]
            pick[pos] = i
            if dfs(pos + 1):
                return True
            deficit[i] += col[i]
            pick[pos] = -1
            if budget.exhausted:
                return False
        # serving some open user dominates leaving the slot idle
        return False if cand.size else dfs(pos + 1)

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 100))
    try:
        found = dfs(0)
    finally:
        sys.setrecursionlimit(limit)
    if not found:
        return None
    owner = -np.ones(n, int)
    owner[order] = pick
    return owner


def subset_feasible(candidate_set: Sequence[int], rates: RateMatrix | np.ndarray, demands,
                    options: ScheduleOptions | None = None, _budget: _Budget | None = None) -> Feasibility:
    """Can the slots be split so every user in ``candidate_set`` meets its demand?

    The returned owner array indexes users of the full problem.
    """
    options = options or ScheduleOptions()
    r_all = rates.r if isinstance(rates, RateMatrix) else np.asarray(rates, float)
    q_all = np.asarray(demands, float)
    members = np.array(sorted(set(int(i) for i in candidate_set)), int)
    n = r_all.shape[1]
    if members.size == 0:
        return Feasibility(True, -np.ones(n, int), None, "empty")
    r, q = r_all[members], q_all[members]
    if np.any(~_meets(r.sum(axis=1), q)):
        return Feasibility(False, None, None, "single-user capacity")
    if r.max(axis=0).sum() < (q - DEMAND_ATOL_BITS).sum():
        return Feasibility(False, None, None, "aggregate capacity")
    order = np.argsort(-r.max(axis=0), kind="stable")

    def lift(owner):
        out = -np.ones(n, int)
        used = owner >= 0
        out[used] = members[owner[used]]
        return out

    owner = _greedy(r, q, order)
    if owner is None and members.size == 1:
        owner = _greedy(r, q, np.argsort(-r[0], kind="stable"))
    if owner is not None:
        return Feasibility(True, lift(owner), None, "greedy")
    owner = _balance(_greedy(r, q, order, partial=True), r, q)
    if owner is not None:
        return Feasibility(True, lift(owner), None, "local search")
    if options.use_lp and members.size > 1:
        cert = _lp_refutes(r, q)
        if cert is not None:
            return Feasibility(False, None, cert, "relaxation infeasible")
    if not options.exact:
        return Feasibility(None, None, None, "heuristic inconclusive")
    budget = _budget or _Budget(time.monotonic() + options.timeout_s, options.node_limit)
    owner = _branch_and_bound(r, q, order, budget)
    if owner is not None:
        return Feasibility(True, lift(owner), None, "branch and bound")
    if budget.exhausted:
        return Feasibility(None, None, None, "budget exhausted")
    return Feasibility(False, None, None, "branch and bound exhausted")


def _fill_leftover(owner, r, q, covered):
    """Give idle slots to uncovered users (best rate per demand), else best covered rate."""
    owner = owner.copy()
    M = r.shape[0]
    uncovered = np.setdiff1d(np.arange(M), covered)
    for slot in np.flatnonzero(owner < 0):
        if uncovered.size:
            score = r[uncovered, slot] / q[uncovered]
            if score.max() > 0:
                owner[slot] = int(uncovered[np.argmax(score)])
                continue
        if len(covered):
            cov = np.asarray(covered)
            owner[slot] = int(cov[np.argmax(r[cov, slot])])
    return owner


def coverage_from_rates(owner, r, q) -> CoverageResult:
    M, N = r.shape
    alpha = np.zeros((M, N), bool)
    used = owner >= 0
    alpha[owner[used], np.flatnonzero(used)] = True
    got = np.sum(r * alpha, axis=1)
    rho = _meets(got, q)
    rho.setflags(write=False)
    return CoverageResult(rho, got)


def solve_scheduling(rates: RateMatrix | np.ndarray, demands, options: ScheduleOptions | None = None,
                     fill_idle: bool = True) -> ScheduleResult:
    """Maximize the number of users whose demand is met.

    Ties between maximum-size covered sets go to the set with the largest
    capacity slack ``sum_n max_i r_in - sum_i Q_i``.  Idle slots are then
    handed to uncovered users so the trajectory step can try to cover them.
    """
    options = options or ScheduleOptions()
    r = rates.r if isinstance(rates, RateMatrix) else np.asarray(rates, float)
    q = np.asarray(demands, float)
    if np.any(q <= 0):
        raise ValueError("demands must be positive")
    M, N = r.shape
    start = time.monotonic()
    budget = _Budget(start + options.timeout_s, options.node_limit)
    viable = [i for i in range(M) if _meets(r[i].sum(), q[i])]
    infeasible: list[frozenset] = []
    undecided_max = 0
    best_set: tuple = ()
    best_owner = -np.ones(N, int)
    checked = 0

    for size in range(len(viable), 0, -1):
        # slack does not depend on feasibility, so the first feasible set in slack order wins the tie-break
        combos = sorted(itertools.combinations(viable, size),
                        key=lambda c: (-(r[list(c)].max(axis=0).sum() - q[list(c)].sum()), c))
        for combo in combos:
            fs = frozenset(combo)
            if any(bad <= fs for bad in infeasible):
                continue
            checked += 1
            res = subset_feasible(combo, r, q, options, budget)
            if res.feasible:
                best_set, best_owner = combo, res.owner
                break
            if res.feasible is False:
                infeasible.append(fs)
            else:
                undecided_max = max(undecided_max, size)
        if best_set:
            break
    gap = max(0, undecided_max - len(best_set))
    owner = _fill_leftover(best_owner, r, q, best_set) if fill_idle else best_owner
    cov = coverage_from_rates(owner, r, q)
    stats = dict(sets_checked=checked, seconds=time.monotonic() - start, nodes=budget.used,
                 timed_out=budget.exhausted)
    if gap:
        log.info("scheduling stopped with bound gap %d after %.1fs", gap, stats["seconds"])
    return ScheduleResult(Schedule.from_owner(owner, M), cov, gap, stats)

