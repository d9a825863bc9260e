"""Reduction of a standard-form conic program to inequality form.

The reduced program is

    minimize    c^T x + c0
    subject to  G x + s = h,   A x = b,   s in K

with ``K`` a product of orthants and (unrotated) Lorentz cones.  Fixed
variables, duplicate or dependent rows and cone variables that appear in a
single equality row are eliminated.  :class:`Recovery` maps primal and dual
points of the reduced program back to the original variables and rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cones import ConeSet
from .program import ConicProgram

log = logging.getLogger(__name__)

SQRT_HALF = np.sqrt(0.5)
ZERO = 1e-13
RANK_CHECK_LIMIT = 250_000  # dense rank check only below this many entries


class PresolveInfeasible(Exception):
    """Equalities are inconsistent; ``certificate`` is a Farkas row combination."""

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class ReducedProgram:
    c: np.ndarray
    c0: float
    G: sp.csc_matrix
    h: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: ConeSet

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class Recovery:
    program: ConicProgram
    kept_vars: np.ndarray                       # reduced column -> original variable
    fixed: list = field(default_factory=list)   # (var, row, value) in elimination order
    pivots: dict = field(default_factory=dict)  # var -> (row, coef, rhs, cols, vals)
    kept_rows: np.ndarray = None                # reduced equality row -> original row
    cone_rows: list = field(default_factory=list)  # (original cone, reduced row offset or None)

    def primal(self, xr, homogeneous=False) -> np.ndarray:
        x = np.zeros(self.program.n)
        x[self.kept_vars] = xr
        if not homogeneous:
            for var, _, value in self.fixed:
                x[var] = value
        for var, (_, coef, rhs, cols, vals) in self.pivots.items():
            x[var] = ((0.0 if homogeneous else rhs) - vals @ x[cols]) / coef
        return x

    def cone_duals(self, zr) -> np.ndarray:
        """Cone multipliers on the original variables (zero on free variables)."""
        z = np.zeros(self.program.n)
        for cone, offset in self.cone_rows:
            if offset is None:
                continue
            blk = zr[offset:offset + cone.dim].copy()
            if cone.kind == "rsoc":
                a, b = blk[0], blk[1]
                blk[0], blk[1] = SQRT_HALF * (a + b), SQRT_HALF * (a - b)
            z[cone.start:cone.start + cone.dim] = blk
        return z

    def dual(self, yr, zr, c=None):
        """Multipliers ``(y, z)`` with ``A^T y + z = c`` for the original program."""
        prog = self.program
        c = prog.c if c is None else c
        zc = self.cone_duals(zr)
        y = np.zeros(prog.m)
        if self.kept_rows is not None and self.kept_rows.size:
            y[self.kept_rows] = -yr
        for var, (row, coef, *_rest) in self.pivots.items():
            y[row] = (c[var] - zc[var]) / coef
        At = prog.A.tocsc()
        for var, row, _ in reversed(self.fixed):
            lo, hi = At.indptr[var], At.indptr[var + 1]
            rows, vals = At.indices[lo:hi], At.data[lo:hi]
            own = rows == row
            rest = float(vals[~own] @ y[rows[~own]])
            y[row] = (c[var] - zc[var] - rest) / vals[own][0]
        return y, zc


def _row_combination(ops, r, memo):
    """Original-row coefficients of the current row ``r``."""
    if r in memo:
        return memo[r]
    combo = {r: 1.0}
    for p, factor in ops.get(r, ()):
        for k, v in _row_combination(ops, p, memo).items():
            combo[k] = combo.get(k, 0.0) - factor * v
    memo[r] = combo
    return combo


def _certificate(prog, ops, weights):
    """Farkas vector ``y`` (``A^T y = 0``, ``b^T y = -1``) from current-row weights."""
    memo = {}
    y = np.zeros(prog.m)
    for r, w in weights.items():
        for k, v in _row_combination(ops, r, memo).items():
            y[k] += w * v
    by = float(prog.b @ y)
    return y / -by if by != 0 else y


def presolve(prog: ConicProgram):
    """Return ``(ReducedProgram, Recovery)`` or raise :class:`PresolveInfeasible`."""
    A = prog.A.tocsr()
    rows = [dict(zip(A.indices[A.indptr[i]:A.indptr[i + 1]], A.data[A.indptr[i]:A.indptr[i + 1]]))
            for i in range(prog.m)]
    for row in rows:
        for j in [j for j, v in row.items() if v == 0.0]:
            del row[j]
    b = prog.b.astype(float).copy()
    bscale = np.maximum(1.0, np.abs(prog.b))
    cols: dict[int, set] = {}
    for i, row in enumerate(rows):
        for j in row:
            cols.setdefault(j, set()).add(i)
    alive = np.ones(prog.m, bool)
    cone_var = prog.cone_mask()
    fixed_val: dict[int, float] = {}
    fixed_order = []
    ops: dict[int, list] = {}

    def rowtol(i):
        return 1e-9 * bscale[i] * max(1.0, max(map(abs, rows[i].values()), default=1.0))

    # fixed variables from singleton rows
    queue = [i for i in range(prog.m) if len(rows[i]) <= 1]
    while queue:
        i = queue.pop()
        if not alive[i] or len(rows[i]) > 1:
            continue
        if not rows[i]:
            if abs(b[i]) > rowtol(i):
                raise PresolveInfeasible(f"row {i} reduces to 0 = {b[i]:.3g}",
                                         _certificate(prog, ops, {i: 1.0}))
            alive[i] = False
            continue
        (j, a), = rows[i].items()
        value = b[i] / a
        fixed_val[j] = value
        fixed_order.append((j, i, value))
        alive[i] = False
        cols[j].discard(i)
        for r in cols.pop(j):
            factor = rows[r].pop(j) / a
            b[r] -= factor * b[i]
            ops.setdefault(r, []).append((i, factor))
            if len(rows[r]) <= 1:
                queue.append(r)
        rows[i] = {}

    # duplicate rows
    seen = {}
    for i in np.flatnonzero(alive):
        row = rows[i]
        keys = sorted(row)
        lead = row[keys[0]]
        sig = tuple((j, round(row[j] / lead, 12)) for j in keys)
        if sig in seen:
            k, klead = seen[sig]
            ratio = lead / klead
            if all(abs(row[j] - ratio * rows[k][j]) <= 1e-12 * abs(row[j]) for j in keys):
                if abs(b[i] - ratio * b[k]) > rowtol(i):
                    raise PresolveInfeasible(f"rows {k} and {i} are parallel but inconsistent",
                                             _certificate(prog, ops, {i: 1.0, k: -ratio}))
                alive[i] = False
                for j in keys:
                    cols[j].discard(i)
                continue
        seen[sig] = (i, lead)

    # cone variables living in a single row become inequality rows
    pivots = {}
    pivot_rows = set()
    for j in np.flatnonzero(cone_var):
        if j in fixed_val or len(cols.get(j, ())) != 1:
            continue
        (r,) = cols[j]
        if r in pivot_rows or abs(rows[r][j]) < ZERO:
            continue
        pivot_rows.add(r)
        others = [k for k in rows[r] if k != j]
        pivots[int(j)] = (r, rows[r][j], b[r], np.array(others, int),
                          np.array([rows[r][k] for k in others]))
    for r in pivot_rows:
        alive[r] = False

    eliminated = set(fixed_val) | set(pivots)
    kept_vars = np.array([j for j in range(prog.n) if j not in eliminated], int)
    colmap = -np.ones(prog.n, int)
    colmap[kept_vars] = np.arange(kept_vars.size)

    # reduced objective
    c = prog.c.copy()
    c0 = prog.c0 + sum(prog.c[j] * v for j, v in fixed_val.items())
    for j, (_row, coef, rhs, others, vals) in pivots.items():
        w = prog.c[j] / coef
        c0 += w * rhs
        c[others] -= w * vals
    cr = c[kept_vars]

    # equality rows
    eq_rows = np.flatnonzero(alive)
    ei, ej, ev = [], [], []
    for k, i in enumerate(eq_rows):
        for j, v in rows[i].items():
            ei.append(k)
            ej.append(colmap[j])
            ev.append(v)
    Ar = sp.csr_matrix((ev, (ei, ej)), shape=(eq_rows.size, kept_vars.size))
    br = b[eq_rows]
    Ar, br, eq_rows = _drop_dependent(prog, ops, Ar, br, eq_rows)

    # cone rows
    gi, gj, gv, h, kinds, cone_rows = [], [], [], [], [], []
    offset = 0
    for cone in prog.cones:
        span = range(cone.start, cone.start + cone.dim)
        if all(j in fixed_val for j in span):
            x = np.zeros(prog.n)
            for j in span:
                x[j] = fixed_val[j]
            single = ConicProgram(prog.n, np.zeros(prog.n), sp.csr_matrix((0, prog.n)), np.zeros(0), (cone,))
            if single.cone_violation(x) <= 1e-12 * max(1.0, np.abs(x[cone.start:cone.start + cone.dim]).max()):
                cone_rows.append((cone, None))
                continue
        block_rows, block_h = [], []
        for j in span:
            if j in fixed_val:
                block_rows.append({})
                block_h.append(fixed_val[j])
            elif j in pivots:
                r, coef, rhs, others, vals = pivots[j]
                block_rows.append({colmap[k]: v / coef for k, v in zip(others, vals)})
                block_h.append(rhs / coef)
            else:
                block_rows.append({colmap[j]: -1.0})
                block_h.append(0.0)
        if cone.kind == "rsoc":
            u, v = block_rows[0], block_rows[1]
            plus = {k: SQRT_HALF * (u.get(k, 0.0) + v.get(k, 0.0)) for k in set(u) | set(v)}
            minus = {k: SQRT_HALF * (u.get(k, 0.0) - v.get(k, 0.0)) for k in set(u) | set(v)}
            block_rows[0], block_rows[1] = plus, minus
            hu, hv = block_h[0], block_h[1]
            block_h[0], block_h[1] = SQRT_HALF * (hu + hv), SQRT_HALF * (hu - hv)
        for k, entries in enumerate(block_rows):
            for col, v in entries.items():
                if v != 0.0:
                    gi.append(offset + k)
                    gj.append(col)
                    gv.append(v)
        h.extend(block_h)
        kinds.append(("nonneg" if cone.kind == "nonneg" else "soc", cone.dim))
        cone_rows.append((cone, offset))
        offset += cone.dim
    G = sp.csc_matrix((gv, (gi, gj)), shape=(offset, kept_vars.size))

    reduced = ReducedProgram(cr, float(c0), G, np.array(h, float), Ar.tocsc(), br, ConeSet(kinds))
    recovery = Recovery(prog, kept_vars, fixed_order, pivots, eq_rows, cone_rows)
    log.debug("presolve: %d vars %d rows -> %d vars %d eq %d cone rows (%d fixed, %d pivots)",
              prog.n, prog.m, reduced.n, br.size, offset, len(fixed_order), len(pivots))
    return reduced, recovery


def _drop_dependent(prog, ops, Ar, br, eq_rows):
    """Remove linearly dependent equality rows (dense check, small systems only)."""
    m, n = Ar.shape
    if m == 0 or m * n > RANK_CHECK_LIMIT:
        return Ar, br, eq_rows
    dense = Ar.toarray()
    _, R, perm = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (diag[0] if diag.size else 0.0) * 10
    rank = int((diag > tol).sum())
    if rank == m:
        return Ar, br, eq_rows
    indep = np.sort(perm[:rank])
    dep = np.sort(perm[rank:])
    coef, *_ = np.linalg.lstsq(dense[indep].T, dense[dep].T, rcond=None)
    mismatch = br[dep] - coef.T @ br[indep]
    scale = np.maximum(1.0, np.abs(br[dep]))
    bad = np.flatnonzero(np.abs(mismatch) > 1e-9 * scale)
    if bad.size:
        k = bad[0]
        weights = {int(eq_rows[dep[k]]): 1.0}
        for w, i in zip(coef[:, k], indep):
            weights[int(eq_rows[i])] = weights.get(int(eq_rows[i]), 0.0) - w
        raise PresolveInfeasible("dependent equality rows are inconsistent",
                                 _certificate(prog, ops, weights))
    log.debug("presolve: dropped %d dependent rows", dep.size)
    return sp.csr_matrix(dense[indep]), br[indep], eq_rows[indep]
