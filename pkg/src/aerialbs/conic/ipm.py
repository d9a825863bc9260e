"""Homogeneous self-dual interior-point method for inequality-form conic programs.

Solves ``min c^T x  s.t.  G x + s = h, A x = b, s in K`` with Nesterov-Todd
scaling and Mehrotra predictor-corrector steps.  Infeasibility is detected
from the embedding (``kappa > tau`` with a certificate direction).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .presolve import ReducedProgram

log = logging.getLogger(__name__)

STEP_FRACTION = 0.99
REG = 1e-10
REFINE_STEPS = 3
DENSE_LIMIT = 400
# reduced-accuracy acceptance when the iteration stalls before reaching tol
NEAR_FEAS = 1e-5
NEAR_GAP = 5e-5
STALL_ITERATIONS = 5


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    pres: float
    dres: float
    gap: float
    pcost: float
    dcost: float


class KktSystem:
    """Factorization of ``[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]``.

    A small static regularization makes the matrix quasi-definite; a few steps
    of iterative refinement against the exact matrix remove its effect.
    """

    def __init__(self, prob: ReducedProgram):
        self.n, self.p, self.m = prob.n, prob.A.shape[0], prob.G.shape[0]
        self.size = self.n + self.p + self.m
        self.dense = self.size <= DENSE_LIMIT
        n, p = self.n, self.p
        A = prob.A.tocoo()
        G = prob.G.tocoo()
        # static part: A, A', G, G' and the regularization diagonal
        rows = [A.row + n, A.col, G.row + n + p, G.col]
        cols = [A.col, A.row + n, G.col, G.row + n + p]
        vals = [A.data, A.data, G.data, G.data]
        self._static = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        diag = np.concatenate([np.full(n, REG), np.full(p, -REG), np.full(self.m, -REG)])
        self._reg = sp.diags(diag).tocoo()
        self._cones = prob.cones
        # scaling block pattern (orthant diagonal plus dense Lorentz blocks)
        off = n + p
        lin = prob.cones.lin
        br, bc = [lin + off], [lin + off]
        for idx in prob.cones.soc.values():
            k, d = idx.shape
            br.append(np.repeat(idx, d, axis=1).reshape(-1) + off)
            bc.append(np.tile(idx, (1, d)).reshape(-1) + off)
        self._wrows = np.concatenate(br)
        self._wcols = np.concatenate(bc)

    def factor(self, scaling):
        diag, blocks = scaling.squared_blocks()
        wvals = np.concatenate([diag] + [w.reshape(-1) for _, w in blocks])
        r, c, v = self._static
        rows = np.concatenate([r, self._wrows])
        cols = np.concatenate([c, self._wcols])
        exact = sp.csc_matrix((np.concatenate([v, -wvals]), (rows, cols)), shape=(self.size,) * 2)
        self.exact = exact
        reg = (exact + self._reg).tocsc()
        if self.dense:
            # match splu, which raises on an exactly singular matrix
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                try:
                    self._lu = sla.lu_factor(reg.toarray(), check_finite=False)
                except sla.LinAlgWarning as err:
                    raise RuntimeError(str(err)) from None
        else:
            self._lu = spla.splu(reg, permc_spec="COLAMD", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})

    def _solve_once(self, rhs):
        if self.dense:
            return sla.lu_solve(self._lu, rhs, check_finite=False)
        return self._lu.solve(rhs)

    def solve(self, bx, by, bz):
        rhs = np.concatenate([bx, by, bz])
        sol = self._solve_once(rhs)
        for _ in range(REFINE_STEPS):
            res = rhs - self.exact @ sol
            if np.abs(res).max() <= 1e-14 * max(1.0, np.abs(rhs).max()):
                break
            sol += self._solve_once(res)
        n, p = self.n, self.p
        return sol[:n], sol[n:n + p], sol[n + p:]


class _IdentityScaling:
    def __init__(self, cones):
        self.cones = cones

    def squared_blocks(self):
        blocks = [(idx, np.broadcast_to(np.eye(idx.shape[1]), (idx.shape[0],) + (idx.shape[1],) * 2))
                  for idx in self.cones.soc.values()]
        return np.ones(self.cones.lin.size), blocks


def _shift_interior(cones, v):
    t = cones.margin(v)
    return v + (1.0 + t) * cones.identity() if t >= 0 else v


def solve_reduced(prob: ReducedProgram, tol: float = 1e-8, max_iter: int = 100) -> IpmResult:
    cones = prob.cones
    c, h, b, A, G = prob.c, prob.h, prob.b, prob.A.tocsr(), prob.G.tocsr()
    At, Gt = A.T.tocsr(), G.T.tocsr()
    kkt = KktSystem(prob)
    e = cones.identity()
    nrm_c, nrm_b, nrm_h = (max(1.0, float(np.linalg.norm(v))) for v in (c, b, h))

    kkt.factor(_IdentityScaling(cones))
    x, y, z0 = kkt.solve(np.zeros_like(c), b, h)
    s = _shift_interior(cones, -z0)
    _, y_d, z_d = kkt.solve(-c, np.zeros_like(b), np.zeros_like(h))
    z = _shift_interior(cones, z_d)
    y = y_d
    tau, kappa = 1.0, 1.0

    status = "max_iter"
    info = {}
    it = 0
    best = None          # (merit, iteration, snapshot) of the best near-optimal iterate
    for it in range(max_iter + 1):
        rx = At @ y + Gt @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        cx, by, hz = float(c @ x), float(b @ y), float(h @ z)
        rt = kappa + cx + by + hz
        gap = float(s @ z)
        mu = (gap + tau * kappa) / (cones.degree + 1)

        pcost, dcost = cx / tau, -(by + hz) / tau
        pres = max(np.linalg.norm(ry) / nrm_b, np.linalg.norm(rz) / nrm_h) / tau
        dres = np.linalg.norm(rx) / nrm_c / tau
        relgap = gap / tau**2 / max(1.0, min(abs(pcost), abs(dcost)))
        info = dict(pres=pres, dres=dres, gap=relgap, pcost=pcost, dcost=dcost)
        log.debug("it %2d pcost %.9g dcost %.9g pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e",
                  it, pcost, dcost, pres, dres, relgap, tau, kappa)
        if pres <= tol and dres <= tol and (relgap <= tol or gap / tau**2 <= tol):
            if __debug__ and pcost < dcost - 1e-6 * max(1.0, abs(pcost)):
                log.warning("weak duality violated at convergence: %g < %g", pcost, dcost)
            status = "optimal"
            break
        if hz + by < 0:
            dual_ray = np.linalg.norm(At @ y + Gt @ z) / nrm_c / -(hz + by)
            if dual_ray <= tol:
                status = "primal_infeasible"
                break
        if cx < 0:
            primal_ray = max(np.linalg.norm(A @ x) / nrm_b, np.linalg.norm(G @ x + s) / nrm_h) / -cx
            if primal_ray <= tol:
                status = "dual_infeasible"
                break
        merit = max(pres, dres, relgap)
        if pres <= NEAR_FEAS and dres <= NEAR_FEAS and relgap <= NEAR_GAP and (best is None or merit < best[0]):
            best = (merit, it, (x, y, z, s, tau, dict(info)))
        if best is not None and it - best[1] >= STALL_ITERATIONS:
            log.debug("stalled since iteration %d", best[1])
            break
        if it == max_iter:
            break

        W = cones.scaling(s, z)
        lam = W.lam
        try:
            kkt.factor(W)
        except RuntimeError as err:  # singular factorization
            log.warning("KKT factorization failed: %s", err)
            break
        x1, y1, z1 = kkt.solve(-c, b, h)
        denom_base = float(c @ x1 + b @ y1 + h @ z1)
        lam_sq = cones.prod(lam, lam)

        def direction(sigma, ds_target, dk_target):
            f = 1.0 - sigma
            rhs_s = cones.div(lam, ds_target)
            x2, y2, z2 = kkt.solve(-f * rx, -f * ry, -f * rz - W.apply(rhs_s))
            dtau = (-f * rt - dk_target / tau - float(c @ x2 + b @ y2 + h @ z2)) / (denom_base - kappa / tau)
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            ds = W.apply(rhs_s - W.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(ds, dz, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        aff = direction(0.0, -lam_sq, -tau * kappa)
        alpha_aff = min(1.0, step_length(aff[3], aff[2], aff[4], aff[5]))
        sigma = (1.0 - alpha_aff) ** 3
        # corrector
        cross = cones.prod(W.apply(aff[3], inverse=True), W.apply(aff[2]))
        ds_target = -lam_sq - cross + sigma * mu * e
        dk_target = -tau * kappa - aff[4] * aff[5] + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_target, dk_target)
        alpha = min(1.0, STEP_FRACTION * step_length(ds, dz, dtau, dkappa))

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        # renormalize the homogeneous iterate to keep magnitudes tame
        scale = max(tau, kappa)
        if scale > 1e6 or scale < 1e-6:
            x, y, z, s, tau, kappa = x / scale, y / scale, z / scale, s / scale, tau / scale, kappa / scale

    if status == "max_iter" and best is not None:
        status = "near_optimal"
        x, y, z, s, tau, info = best[2]
    if status == "primal_infeasible":
        k = -(float(h @ z) + float(b @ y))
        return IpmResult(status, x, y / k, z / k, s, it, info["pres"], info["dres"], info["gap"], np.nan, np.nan)
    if status == "dual_infeasible":
        k = -float(c @ x)
        return IpmResult(status, x / k, y, z, s / k, it, info["pres"], info["dres"], info["gap"], np.nan, np.nan)
    return IpmResult(status, x / tau, y / tau, z / tau, s / tau, it, info["pres"], info["dres"], info["gap"],
                     info["pcost"], info["dcost"])
