"""Public entry point: presolve, interior-point solve, recovery."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass

import numpy as np

from .ipm import solve_reduced
from .presolve import PresolveInfeasible, presolve
from .program import ConicProgram

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITER = "max_iter"
    NEAR_OPTIMAL = "near_optimal"   # stalled; best iterate meets reduced tolerances


@dataclass
class ConicSolution:
    """Result of :func:`solve`.

    For ``optimal`` the pair ``(y, z)`` satisfies ``A^T y + z = c`` with ``z``
    in the dual cone.  For ``primal_infeasible``, ``certificate`` is a vector
    ``y`` with ``b^T y = -1`` and ``A^T y`` in the dual cone (zero on free
    variables).  For ``dual_infeasible``, ``x`` is an improving ray.
    """

    status: Status
    x: np.ndarray
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    primal_objective: float = np.nan
    dual_objective: float = np.nan
    gap: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    iterations: int = 0
    certificate: np.ndarray | None = None
    certificate_residual: float = np.nan
    seconds: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def usable(self) -> bool:
        """Optimal, or stalled at a point meeting the reduced tolerances."""
        return self.status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


def dual_cone_violation(program: ConicProgram, w: np.ndarray) -> float:
    """Violation of ``w`` in the dual cone: all cones here are self-dual, free parts must vanish."""
    free = ~program.cone_mask()
    worst = float(np.abs(w[free]).max()) if free.any() else 0.0
    return max(worst, program.cone_violation(w))


def farkas_residual(program: ConicProgram, y: np.ndarray) -> float:
    """Residual of an infeasibility certificate normalized to ``b^T y = -1``."""
    by = float(program.b @ y)
    if by >= 0:
        return np.inf
    y = y / -by
    return dual_cone_violation(program, program.A.T @ y)


def primal_residual(program: ConicProgram, x: np.ndarray) -> float:
    eq = program.A @ x - program.b
    res = float(np.abs(eq).max() / max(1.0, np.abs(program.b).max())) if eq.size else 0.0
    return max(res, program.cone_violation(x) / max(1.0, np.abs(x).max(initial=0.0)))


def solve(program: ConicProgram, tol: float = 1e-8, max_iter: int = 100) -> ConicSolution:
    start = time.perf_counter()
    try:
        reduced, recovery = presolve(program)
    except PresolveInfeasible as exc:
        log.debug("presolve: %s", exc)
        cert = exc.certificate
        return ConicSolution(Status.PRIMAL_INFEASIBLE, np.full(program.n, np.nan), certificate=cert,
                             certificate_residual=farkas_residual(program, cert),
                             seconds=time.perf_counter() - start)

    res = solve_reduced(reduced, tol=tol, max_iter=max_iter)
    status = Status(res.status)
    out = ConicSolution(status, np.full(program.n, np.nan), iterations=res.iterations,
                        primal_residual=res.pres, dual_residual=res.dres, gap=res.gap)
    if status is Status.PRIMAL_INFEASIBLE:
        y, _ = recovery.dual(res.y, res.z, c=np.zeros(program.n))
        cert = -y
        by = float(program.b @ cert)
        out.certificate = cert / -by if by < 0 else cert
        out.certificate_residual = farkas_residual(program, out.certificate)
    elif status is Status.DUAL_INFEASIBLE:
        out.x = recovery.primal(res.x, homogeneous=True)
    else:
        out.x = recovery.primal(res.x)
        out.y, out.z = recovery.dual(res.y, res.z)
        out.primal_objective = program.objective(out.x)
        out.dual_objective = float(program.b @ out.y) + program.c0
        out.primal_residual = primal_residual(program, out.x)
    out.seconds = time.perf_counter() - start
    log.debug("conic solve: %s in %d iterations, %.3fs", status.value, out.iterations, out.seconds)
    return out
