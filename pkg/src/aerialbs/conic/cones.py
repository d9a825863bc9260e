"""Vectorized algebra for products of nonnegative orthants and Lorentz cones.

Second-order cones of equal dimension are stacked into 2-D index arrays so
every operation is a handful of numpy calls regardless of the cone count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConeSet:
    """Row layout of the cone constraint ``s = h - G x``.

    ``kinds`` lists ``("nonneg", dim)`` / ``("soc", dim)`` blocks in row order.
    """

    def __init__(self, kinds):
        self.kinds = [(k, int(d)) for k, d in kinds]
        nonneg, socs = [], {}
        row = 0
        for kind, dim in self.kinds:
            idx = np.arange(row, row + dim)
            if kind == "nonneg":
                nonneg.append(idx)
            elif kind == "soc":
                if dim < 1:
                    raise ValueError("empty second-order cone")
                socs.setdefault(dim, []).append(idx)
            else:
                raise ValueError(f"unsupported cone kind {kind!r}")
            row += dim
        self.m = row
        self.lin = np.concatenate(nonneg) if nonneg else np.zeros(0, int)
        self.soc = {d: np.array(v) for d, v in sorted(socs.items())}
        self.degree = self.lin.size + sum(v.shape[0] for v in self.soc.values())

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[self.lin] = 1.0
        for idx in self.soc.values():
            e[idx[:, 0]] = 1.0
        return e

    def margin(self, x) -> float:
        """Smallest ``t`` with ``x + t e`` in the closed cone (negative if interior)."""
        out = -np.inf
        if self.lin.size:
            out = max(out, float(-x[self.lin].min()))
        for idx in self.soc.values():
            blk = x[idx]
            out = max(out, float((np.linalg.norm(blk[:, 1:], axis=1) - blk[:, 0]).max()))
        return out

    def contains(self, x, tol=0.0) -> bool:
        return self.margin(x) <= tol

    def prod(self, u, v) -> np.ndarray:
        """Jordan product ``u o v``."""
        out = np.empty(self.m)
        out[self.lin] = u[self.lin] * v[self.lin]
        for idx in self.soc.values():
            ub, vb = u[idx], v[idx]
            out[idx[:, 0]] = np.einsum("ij,ij->i", ub, vb)
            out[idx[:, 1:]] = ub[:, :1] * vb[:, 1:] + vb[:, :1] * ub[:, 1:]
        return out

    def div(self, lam, d) -> np.ndarray:
        """Solve ``lam o x = d`` for ``x``."""
        out = np.empty(self.m)
        out[self.lin] = d[self.lin] / lam[self.lin]
        for idx in self.soc.values():
            lb, db = lam[idx], d[idx]
            l0, l1 = lb[:, 0], lb[:, 1:]
            det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * db[:, 0] - np.einsum("ij,ij->i", l1, db[:, 1:])) / det
            out[idx[:, 0]] = x0
            out[idx[:, 1:]] = (db[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, x, dx) -> float:
        """Largest ``a`` keeping ``x + a dx`` in the cone (``x`` interior)."""
        inv = 0.0
        if self.lin.size:
            inv = max(inv, float((-dx[self.lin] / x[self.lin]).max()))
        for idx in self.soc.values():
            xb, db = x[idx], dx[idx]
            xn = np.sqrt(np.maximum(xb[:, 0] ** 2 - np.einsum("ij,ij->i", xb[:, 1:], xb[:, 1:]), 1e-300))
            xbar = xb / xn[:, None]
            u = xbar.copy()
            u[:, 0] += 1.0
            u /= np.sqrt(2.0 * (xbar[:, 0] + 1.0))[:, None]
            ju = u.copy()
            ju[:, 1:] *= -1.0
            jd = db.copy()
            jd[:, 1:] *= -1.0
            ujd = np.einsum("ij,ij->i", u, jd)
            rho = (2.0 * ju * ujd[:, None] - jd) / xn[:, None]
            cand = np.linalg.norm(rho[:, 1:], axis=1) - rho[:, 0]
            inv = max(inv, float(cand.max()))
        return np.inf if inv <= 0 else 1.0 / inv

    def scaling(self, s, z) -> NTScaling:
        return NTScaling(self, s, z)


@dataclass
class _SocBlock:
    idx: np.ndarray
    beta: np.ndarray
    v: np.ndarray


class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lambda``.

    For a Lorentz block ``W = beta (2 v v^T - J)`` where ``v^T J v = 1``; for the
    orthant ``W = diag(sqrt(s / z))``.  ``W`` is symmetric in both cases.
    """

    def __init__(self, cones: ConeSet, s, z):
        self.cones = cones
        lin = cones.lin
        self.d = np.sqrt(s[lin] / z[lin])
        self.blocks = []
        for idx in cones.soc.values():
            sb, zb = s[idx], z[idx]
            aa = np.sqrt(sb[:, 0] ** 2 - np.einsum("ij,ij->i", sb[:, 1:], sb[:, 1:]))
            bb = np.sqrt(zb[:, 0] ** 2 - np.einsum("ij,ij->i", zb[:, 1:], zb[:, 1:]))
            # an iterate on the boundary gives non-finite scaling; the KKT solve then reports failure
            with np.errstate(divide="ignore", invalid="ignore"):
                beta = np.sqrt(aa / bb)
                sn = sb / aa[:, None]
                zn = zb / bb[:, None]
            gamma = np.sqrt((1.0 + np.einsum("ij,ij->i", sn, zn)) / 2.0)
            jz = zn.copy()
            jz[:, 1:] *= -1.0
            wbar = (sn + jz) / (2.0 * gamma)[:, None]
            v = wbar.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wbar[:, 0] + 1.0))[:, None]
            self.blocks.append(_SocBlock(idx, beta, v))
        self.lam = self.apply(z)

    def apply(self, x, inverse=False) -> np.ndarray:
        out = np.empty_like(x)
        lin = self.cones.lin
        out[lin] = x[lin] / self.d if inverse else x[lin] * self.d
        for blk in self.blocks:
            xb = x[blk.idx]
            v = blk.v
            if inverse:
                jv = v.copy()
                jv[:, 1:] *= -1.0
                proj = np.einsum("ij,ij->i", jv, xb)
                res = 2.0 * jv * proj[:, None]
                res[:, 0] -= xb[:, 0]
                res[:, 1:] += xb[:, 1:]
                out[blk.idx] = res / blk.beta[:, None]
            else:
                proj = np.einsum("ij,ij->i", v, xb)
                res = 2.0 * v * proj[:, None]
                res[:, 0] -= xb[:, 0]
                res[:, 1:] += xb[:, 1:]
                out[blk.idx] = res * blk.beta[:, None]
        return out

    def squared_blocks(self):
        """``W^2`` as (diagonal for the orthant, list of (idx, dense blocks))."""
        diag = self.d**2
        dense = []
        for blk in self.blocks:
            v = blk.v
            dim = v.shape[1]
            wm = 2.0 * np.einsum("ki,kj->kij", v, v)
            wm[:, 0, 0] -= 1.0
            wm[:, np.arange(1, dim), np.arange(1, dim)] += 1.0
            w2 = np.einsum("kij,kjl->kil", wm, wm) * (blk.beta**2)[:, None, None]
            dense.append((blk.idx, w2))
        return diag, dense
