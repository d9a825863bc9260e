"""Canonical conic programs in standard form.

    minimize    c^T x + c0
    subject to  A x = b
                x[span] in K_span   for every listed cone

Variables not covered by any cone span are free.  ``rsoc`` spans
``(u, v, x...)`` mean ``2 u v >= ||x||^2`` with ``u, v >= 0``.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("nonneg", "soc", "rsoc")


@dataclass(frozen=True)
class Cone:
    kind: str
    start: int
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1 or (self.kind == "rsoc" and self.dim < 2):
            raise ValueError(f"{self.kind} cone of dimension {self.dim}")

    @property
    def span(self) -> range:
        return range(self.start, self.start + self.dim)


@dataclass(frozen=True)
class ConicProgram:
    n: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple
    c0: float = 0.0
    names: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.c, float).reshape(-1)
        A = sp.csr_matrix(self.A, dtype=float)
        A.sum_duplicates()
        b = np.asarray(self.b, float).reshape(-1)
        if c.size != self.n or A.shape != (b.size, self.n):
            raise ValueError("inconsistent program dimensions")
        cones = tuple(self.cones)
        covered = np.zeros(self.n, bool)
        for cone in cones:
            if cone.start < 0 or cone.start + cone.dim > self.n:
                raise ValueError(f"cone {cone} exceeds {self.n} variables")
            if covered[cone.start:cone.start + cone.dim].any():
                raise ValueError("cone spans overlap")
            covered[cone.start:cone.start + cone.dim] = True
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cones", cones)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def cone_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, bool)
        for cone in self.cones:
            mask[cone.start:cone.start + cone.dim] = True
        return mask

    def objective(self, x) -> float:
        return float(self.c @ x + self.c0)

    def cone_violation(self, x) -> float:
        """Largest distance-like violation of any cone membership."""
        worst = 0.0
        for cone in self.cones:
            blk = np.asarray(x[cone.start:cone.start + cone.dim], float)
            if cone.kind == "nonneg":
                worst = max(worst, float(-blk.min()))
            elif cone.kind == "soc":
                worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
            else:
                u, v, rest = blk[0], blk[1], blk[2:]
                t = (u + v) / np.sqrt(2.0)
                r = np.hypot(np.linalg.norm(rest), (u - v) / np.sqrt(2.0))
                worst = max(worst, float(r - t))
        return worst

    # -- text round trip -------------------------------------------------

    def dumps(self) -> str:
        """Exact text form; floats use ``repr`` so loading is bit-identical."""
        A = self.A.tocoo()
        lines = ["conicprogram 1", f"n {self.n}", f"c0 {float(self.c0)!r}"]
        nz = np.flatnonzero(self.c)
        lines.append(f"c {nz.size}")
        lines.extend(f"{j} {float(self.c[j])!r}" for j in nz)
        lines.append(f"A {A.shape[0]} {A.nnz}")
        lines.extend(f"{i} {j} {float(v)!r}" for i, j, v in zip(A.row, A.col, A.data))
        lines.append(f"b {self.b.size}")
        lines.extend(repr(float(v)) for v in self.b)
        lines.append(f"cones {len(self.cones)}")
        lines.extend(f"{k.kind} {k.start} {k.dim}" for k in self.cones)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> ConicProgram:
        it = iter(text.splitlines())

        def header(tag):
            parts = next(it).split()
            if parts[0] != tag:
                raise ValueError(f"expected {tag!r}, got {parts[0]!r}")
            return parts[1:]

        if header("conicprogram") != ["1"]:
            raise ValueError("unsupported conic program version")
        n = int(header("n")[0])
        c0 = float(header("c0")[0])
        c = np.zeros(n)
        for _ in range(int(header("c")[0])):
            j, v = next(it).split()
            c[int(j)] = float(v)
        m, nnz = map(int, header("A"))
        rows, cols, vals = np.zeros(nnz, int), np.zeros(nnz, int), np.zeros(nnz)
        for k in range(nnz):
            i, j, v = next(it).split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(v)
        size = int(header("b")[0])
        b = np.array([float(next(it)) for _ in range(size)])
        cones = []
        for _ in range(int(header("cones")[0])):
            kind, start, dim = next(it).split()
            cones.append(Cone(kind, int(start), int(dim)))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        return cls(n, c, A, b, tuple(cones), c0)


Affine = tuple  # (indices, coefficients, constant)


def aff(idx=(), coef=(), const: float = 0.0) -> Affine:
    """Affine expression ``sum(coef * x[idx]) + const``."""
    idx = np.atleast_1d(np.asarray(idx, int))
    coef = np.broadcast_to(np.asarray(coef, float), idx.shape)
    return idx, coef, float(const)


class ConicBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Cone entries are affine expressions of decision variables; each cone gets
    its own block of cone variables tied to the expressions by equality rows,
    which presolve folds back into an inequality form.
    """

    def __init__(self):
        self.n = 0
        self._c: dict[int, float] = {}
        self.c0 = 0.0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._b: list[float] = []
        self.cones: list[Cone] = []
        self.names: dict[str, np.ndarray] = {}

    def variables(self, count: int, name: str | None = None) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self.n += count
        if name is not None:
            self.names[name] = idx
        return idx

    def minimize(self, idx, coef, const: float = 0.0):
        for j, v in zip(np.atleast_1d(idx), np.broadcast_to(coef, np.shape(np.atleast_1d(idx)))):
            self._c[int(j)] = self._c.get(int(j), 0.0) + float(v)
        self.c0 += const

    def equality(self, idx, coef, rhs: float):
        """Add ``sum(coef * x[idx]) == rhs``."""
        idx = np.atleast_1d(np.asarray(idx, int))
        self._push_rows(np.zeros(idx.size, int), idx, np.broadcast_to(np.asarray(coef, float), idx.shape), [rhs])

    def equalities(self, rows, cols, vals, rhs):
        """Batched equalities; ``rows`` are local (0-based) row ids."""
        self._push_rows(np.asarray(rows, int), np.asarray(cols, int), np.asarray(vals, float), list(rhs))

    def _push_rows(self, rows, cols, vals, rhs):
        base = len(self._b)
        self._rows.append(rows + base)
        self._cols.append(cols)
        self._vals.append(vals)
        self._b.extend(float(r) for r in rhs)

    def cone(self, kind: str, entries: Sequence[Affine]) -> np.ndarray:
        """Constrain the vector of affine ``entries`` to a cone; returns its variables."""
        dim = len(entries)
        cv = self.variables(dim)
        self.cones.append(Cone(kind, int(cv[0]), dim))
        rows, cols, vals, rhs = [], [], [], []
        for k, (idx, coef, const) in enumerate(entries):
            rows.append(np.full(idx.size + 1, k))
            cols.append(np.concatenate(([cv[k]], idx)))
            vals.append(np.concatenate(([1.0], -coef)))
            rhs.append(const)
        self._push_rows(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs)
        return cv

    def cones_batch(self, kind: str, idx: np.ndarray, coef: np.ndarray, const: np.ndarray) -> np.ndarray:
        """Add ``K`` cones of one shape at once.

        ``idx`` and ``coef`` have shape ``(K, dim, terms)`` (pad with coefficient
        zero), ``const`` has shape ``(K, dim)``.  Returns cone variables ``(K, dim)``.
        """
        idx = np.asarray(idx, int)
        coef = np.asarray(coef, float)
        const = np.asarray(const, float)
        K, dim, terms = idx.shape
        cv = self.variables(K * dim).reshape(K, dim)
        for k in range(K):
            self.cones.append(Cone(kind, int(cv[k, 0]), dim))
        local = np.arange(K * dim).reshape(K, dim)
        rows = np.concatenate([local[..., None], np.broadcast_to(local[..., None], (K, dim, terms))], axis=2)
        cols = np.concatenate([cv[..., None], idx], axis=2)
        vals = np.concatenate([np.ones((K, dim, 1)), -coef], axis=2)
        keep = vals.reshape(-1) != 0.0
        self._push_rows(rows.reshape(-1)[keep], cols.reshape(-1)[keep], vals.reshape(-1)[keep], const.reshape(-1))
        return cv

    def build(self) -> ConicProgram:
        c = np.zeros(self.n)
        for j, v in self._c.items():
            c[j] = v
        m = len(self._b)
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, int)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))
        return ConicProgram(self.n, c, A, np.array(self._b), tuple(self.cones), self.c0, dict(self.names))


def program_from_dense(c, A, b, cones: Iterable[tuple[str, int, int]], c0=0.0) -> ConicProgram:
    A = np.atleast_2d(np.asarray(A, float))
    if A.size == 0:
        A = np.zeros((0, len(c)))
    return ConicProgram(len(c), np.asarray(c, float), sp.csr_matrix(A), np.asarray(b, float),
                        tuple(Cone(k, s, d) for k, s, d in cones), c0)
