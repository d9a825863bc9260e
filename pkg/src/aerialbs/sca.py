"""Convexified trajectory subproblem around a local point.

Rates are replaced by their first-order lower bound in the squared distance,
the speed floor by a slack ``tau`` with a linearized ``||v||^2 >= tau^2``, and
the propulsion energy by conic epigraphs.  Everything compiles to a
:class:`~aerialbs.conic.ConicProgram` in scaled units:

* positions in units of the area size, velocities in ``v_max``,
  accelerations in ``a_max``;
* rate margins in units of the largest candidate demand.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicBuilder, ConicProgram, ConicSolution, aff
from .model import KINEMATIC_ATOL, Scenario, Schedule, SystemParams, Trajectory, sq_horizontal, total_energy

log = logging.getLogger(__name__)

LOG2E = float(np.log2(np.e))
BOUND_MARGIN = 1e-7   # relative back-off on speed, acceleration and energy limits


class Variant(str, enum.Enum):
    NOMINAL = "nominal"
    WORST_CASE = "worst_case"
    MEDM = "medm"


class Objective(str, enum.Enum):
    MAX_SLACK = "feasibility_with_max_slack"
    MAX_MIN_EXCESS = "max_min_excess"
    MIN_ENERGY = "min_energy"
    RESTORE = "restore"   # elastic speed-floor and energy slacks, minimized


@dataclass(frozen=True)
class LocalPoint:
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, float)
        v = np.array(self.v, float)
        if s.shape != v.shape or s.ndim != 2 or s.shape[1] != 2:
            raise ValueError("local point needs matching (N+1, 2) positions and velocities")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> LocalPoint:
        return cls(traj.s, traj.v)

    @property
    def N(self) -> int:
        return self.s.shape[0] - 1


@dataclass(frozen=True)
class RateBoundCoeffs:
    """Per user/slot bound coefficients: slope ``A`` (per m^2) and value ``Bc`` (bit/s/Hz)."""

    A: np.ndarray
    Bc: np.ndarray
    z_local: np.ndarray      # padded squared horizontal distance at the expansion point
    positions: np.ndarray
    bits_factor: float
    pad: float = 0.0


def rate_bound_coeffs(local: LocalPoint, scenario: Scenario, params: SystemParams, pad: float = 0.0,
                      positions=None) -> RateBoundCoeffs:
    pos = scenario.positions if positions is None else np.asarray(positions, float)
    d = np.sqrt(sq_horizontal(local.s[None, 1:, :], pos[:, None, :]))
    z = (d + pad) ** 2
    pz = params.P * params.zeta0
    h2 = params.H**2
    A = LOG2E * pz / ((h2 + z) * (h2 + z + pz))
    Bc = np.log2(1.0 + pz / (h2 + z))
    return RateBoundCoeffs(A, Bc, z, pos, params.bits_factor, pad)


def rate_lower_bound(s_seq, coeffs: RateBoundCoeffs, schedule: Schedule, user: int) -> float:
    """Lower bound on the bits user ``user`` receives along positions ``s_seq`` (``N+1`` rows)."""
    s_seq = np.asarray(s_seq, float)
    cols = np.flatnonzero(schedule.alpha[user])
    if cols.size == 0:
        return 0.0
    d = np.sqrt(sq_horizontal(s_seq[cols + 1], coeffs.positions[user]))
    z = (d + coeffs.pad) ** 2
    terms = coeffs.Bc[user, cols] - coeffs.A[user, cols] * (z - coeffs.z_local[user, cols])
    return float(coeffs.bits_factor * terms.sum())


def speed_lower_bound(v, v_l):
    """Linearization of ``||v||^2`` at ``v_l``; never exceeds ``||v||^2``."""
    v = np.asarray(v, float)
    v_l = np.asarray(v_l, float)
    return np.sum(v_l * v_l, axis=-1) + 2.0 * np.sum(v_l * (v - v_l), axis=-1)


@dataclass(frozen=True)
class SubproblemSpec:
    schedule: Schedule
    candidate_set: tuple
    local: LocalPoint
    variant: Variant = Variant.NOMINAL
    objective: Objective = Objective.MAX_SLACK
    pad: float = 0.0                 # worst-case distance padding d_th (m)
    positions: np.ndarray | None = field(default=None, compare=False)
    soft_set: tuple = ()             # users whose shared slack is maximized; candidates then hold hard

    def __post_init__(self):
        object.__setattr__(self, "candidate_set", tuple(sorted(int(i) for i in self.candidate_set)))
        object.__setattr__(self, "soft_set", tuple(sorted(int(i) for i in self.soft_set)))
        if set(self.soft_set) & set(self.candidate_set):
            raise ValueError("soft users must not also be candidates")
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.pad < 0:
            raise ValueError("distance padding must be non-negative")


@dataclass
class Scaling:
    length: float
    speed: float
    accel: float
    bits: float


def _scaling(spec: SubproblemSpec, scenario: Scenario, params: SystemParams) -> Scaling:
    users = list(spec.candidate_set + spec.soft_set)
    q = scenario.demands[users] if users else scenario.demands
    return Scaling(scenario.area_size, params.v_max, params.a_max, float(q.max()))


def build_subproblem(spec: SubproblemSpec, scenario: Scenario, params: SystemParams) -> ConicProgram:
    """Compile the convexified trajectory problem for a fixed schedule and covered set."""
    N, dt = params.N, params.delta_t
    M = scenario.M
    if spec.local.N != N or spec.schedule.shape != (M, N):
        raise ValueError("spec dimensions do not match the scenario and parameters")
    if any(i < 0 or i >= M for i in spec.candidate_set + spec.soft_set):
        raise ValueError("candidate set refers to unknown users")
    sc = _scaling(spec, scenario, params)
    L, Vs, As = sc.length, sc.speed, sc.accel
    bld = ConicBuilder()
    S = bld.variables(2 * (N + 1), "s").reshape(N + 1, 2)
    V = bld.variables(2 * (N + 1), "v").reshape(N + 1, 2)
    Acc = bld.variables(2 * N, "a").reshape(N, 2)
    tau = bld.variables(N, "tau")
    t = bld.variables(N, "t")
    w = bld.variables(N, "w")
    u = bld.variables(N, "u")
    q = bld.variables(N, "q")

    # kinematics
    kv, ka, kva = Vs * dt / L, As * dt * dt / (2.0 * L), As * dt / Vs
    n_idx = np.arange(N)
    rows, cols, vals = [], [], []
    for d in range(2):
        base = d * N
        for col, coef in ((S[1:, d], 1.0), (S[:-1, d], -1.0), (V[:-1, d], -kv), (Acc[:, d], -ka)):
            rows.append(base + n_idx)
            cols.append(col)
            vals.append(np.full(N, coef))
        base = (2 + d) * N
        for col, coef in ((V[1:, d], 1.0), (V[:-1, d], -1.0), (Acc[:, d], -kva)):
            rows.append(base + n_idx)
            cols.append(col)
            vals.append(np.full(N, coef))
    bld.equalities(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.zeros(4 * N))
    s0 = scenario.base_pos / L
    v0 = scenario.base_vel / Vs
    for d in range(2):
        bld.equality(S[0, d], 1.0, s0[d])
        bld.equality(S[N, d], 1.0, s0[d])
        bld.equality(V[0, d], 1.0, v0[d])

    def batch(kind, parts):
        """``parts``: per cone entry a (idx array (K, terms), coef array (K, terms), const (K,))."""
        K = parts[0][2].shape[0]
        terms = max(p[0].shape[1] for p in parts)
        idx = np.zeros((K, len(parts), terms), int)
        coef = np.zeros((K, len(parts), terms))
        const = np.zeros((K, len(parts)))
        for k, (pi, pc, pk) in enumerate(parts):
            idx[:, k, :pi.shape[1]] = pi
            coef[:, k, :pc.shape[1]] = pc
            const[:, k] = pk
        return bld.cones_batch(kind, idx, coef, const)

    none = (np.zeros((N, 1), int), np.zeros((N, 1)))
    one = np.ones((N, 1))
    lim = 1.0 - BOUND_MARGIN
    col = lambda x: np.asarray(x).reshape(N, -1)  # noqa: E731

    # speed and acceleration ceilings
    batch("soc", [(*none, np.full(N, lim)), (col(V[1:, 0]), one, np.zeros(N)), (col(V[1:, 1]), one, np.zeros(N))])
    batch("soc", [(*none, np.full(N, lim)), (col(Acc[:, 0]), one, np.zeros(N)), (col(Acc[:, 1]), one, np.zeros(N))])
    # speed floor through the slack chain  tau >= v_min,  psi_lb(v) >= tau^2
    batch("nonneg", [(col(tau), one, np.full(N, -params.v_min / Vs))])
    vl = spec.local.v[1:] / Vs
    psi_idx = np.column_stack([V[1:, 0], V[1:, 1]])
    psi_coef = 2.0 * vl
    psi_const = -np.sum(vl * vl, axis=1)
    restore = spec.objective is Objective.RESTORE
    if restore:
        sigma = bld.variables(N, "sigma")
        batch("nonneg", [(col(sigma), one, np.zeros(N))])
        psi_idx = np.column_stack([psi_idx, sigma])
        psi_coef = np.column_stack([psi_coef, np.ones(N)])
    batch("rsoc", [(psi_idx, psi_coef, psi_const), (*none, np.full(N, 0.5)), (col(tau), one, np.zeros(N))])
    # cubic term:  t >= ||v||,  w >= t^2,  u t >= w^2  =>  u >= ||v||^3
    batch("soc", [(col(t), one, np.zeros(N)), (col(V[1:, 0]), one, np.zeros(N)), (col(V[1:, 1]), one, np.zeros(N))])
    batch("rsoc", [(col(w), one, np.zeros(N)), (*none, np.full(N, 0.5)), (col(t), one, np.zeros(N))])
    batch("rsoc", [(col(u), 0.5 * one, np.zeros(N)), (col(t), one, np.zeros(N)), (col(w), one, np.zeros(N))])
    # inverse-speed term:  q tau >= 1 + ||a||^2 / g^2
    ag = As / params.g
    batch("rsoc", [(col(q), 0.5 * one, np.zeros(N)), (col(tau), one, np.zeros(N)), (*none, np.ones(N)),
                   (col(Acc[:, 0]), ag * one, np.zeros(N)), (col(Acc[:, 1]), ag * one, np.zeros(N))])
    # energy budget, normalized by E_tot
    cu = dt * params.c1 * Vs**3 / params.E_tot
    cq = dt * params.c2 / Vs / params.E_tot
    e_idx = np.concatenate([u, q])
    e_coef = np.concatenate([np.full(N, cu), np.full(N, cq)])
    if restore:
        sig_e = bld.variables(1, "sigma_energy")
        bld.cone("nonneg", [aff(sig_e, 1.0)])
        bld.cone("nonneg", [aff(np.concatenate([e_idx, sig_e]), np.concatenate([-e_coef, [1.0]]), lim)])
        bld.minimize(sigma, np.ones(N))
        bld.minimize(sig_e, float(N))
    else:
        bld.cone("nonneg", [aff(e_idx, -e_coef, lim)])

    if spec.soft_set and not restore:
        eta = bld.variables(1, "eta")
        _rate_constraints(bld, spec, scenario, params, sc, S, spec.candidate_set, None)
        _rate_constraints(bld, spec, scenario, params, sc, S, spec.soft_set, eta)
        bld.minimize(eta, -1.0)
    elif spec.candidate_set and not restore:
        eta = bld.variables(1, "eta")
        _rate_constraints(bld, spec, scenario, params, sc, S, spec.candidate_set, eta)
        bld.minimize(eta, -1.0)
    elif not restore:
        bld.minimize(e_idx, e_coef)
    prog = bld.build()
    prog.names["_scaling"] = np.array([L, Vs, As, sc.bits])
    return prog


def _rate_constraints(bld, spec, scenario, params, sc: Scaling, S, users, eta):
    """``R_lb_i - Q_i >= eta * Qs`` for each listed user, in scaled units; ``eta=None`` means zero."""
    coeffs = rate_bound_coeffs(spec.local, scenario, params, spec.pad, spec.positions)
    L = sc.length
    k = params.bits_factor / sc.bits
    wc = spec.pad > 0
    eta_idx, eta_coef = ([], []) if eta is None else (list(eta), [-1.0])
    for i in users:
        slots = np.flatnonzero(spec.schedule.alpha[i]) + 1
        wi = coeffs.positions[i] / L
        K = slots.size
        slope = k * coeffs.A[i, slots - 1] * L * L
        rhs = k * np.sum(coeffs.Bc[i, slots - 1] + coeffs.A[i, slots - 1] * coeffs.z_local[i, slots - 1]) \
            - scenario.demands[i] / sc.bits
        if K == 0:
            bld.cone("nonneg", [aff(eta_idx, eta_coef, rhs)])
            continue
        if not wc:
            # D_n >= ||S[n] - w||^2
            idx = np.zeros((K, 4, 1), int)
            coef = np.zeros((K, 4, 1))
            const = np.zeros((K, 4))
            D = bld.variables(K)
            idx[:, 0, 0], coef[:, 0, 0] = D, 1.0
            const[:, 1] = 0.5
            idx[:, 2, 0], coef[:, 2, 0], const[:, 2] = S[slots, 0], 1.0, -wi[0]
            idx[:, 3, 0], coef[:, 3, 0], const[:, 3] = S[slots, 1], 1.0, -wi[1]
            bld.cones_batch("rsoc", idx, coef, const)
            epi = D
        else:
            # E_n >= ||S[n] - w||,  Z_n >= (E_n + pad)^2
            E = bld.variables(K)
            Z = bld.variables(K)
            e_idx = np.zeros((K, 3, 1), int)
            e_coef = np.zeros((K, 3, 1))
            e_const = np.zeros((K, 3))
            e_idx[:, 0, 0], e_coef[:, 0, 0] = E, 1.0
            e_idx[:, 1, 0], e_coef[:, 1, 0], e_const[:, 1] = S[slots, 0], 1.0, -wi[0]
            e_idx[:, 2, 0], e_coef[:, 2, 0], e_const[:, 2] = S[slots, 1], 1.0, -wi[1]
            bld.cones_batch("soc", e_idx, e_coef, e_const)
            z_idx = np.zeros((K, 3, 1), int)
            z_coef = np.zeros((K, 3, 1))
            z_const = np.zeros((K, 3))
            z_idx[:, 0, 0], z_coef[:, 0, 0] = Z, 1.0
            z_const[:, 1] = 0.5
            z_idx[:, 2, 0], z_coef[:, 2, 0], z_const[:, 2] = E, 1.0, spec.pad / L
            bld.cones_batch("rsoc", z_idx, z_coef, z_const)
            epi = Z
        bld.cone("nonneg", [aff(np.concatenate([epi, eta_idx]).astype(int), np.concatenate([-slope, eta_coef]), rhs)])


class ExtractionError(RuntimeError):
    pass


def extract_trajectory(solution: ConicSolution, program: ConicProgram, scenario: Scenario,
                       params: SystemParams) -> Trajectory:
    """Rebuild a trajectory whose recursions and boundary hold to rounding error.

    Accelerations come from the solver; positions and velocities are
    re-integrated from the base state and a minimum-norm acceleration
    correction closes the loop exactly.
    """
    if not solution.usable:
        raise ExtractionError(f"cannot extract a trajectory from status {solution.status.value}")
    L, Vs, As, _ = program.names["_scaling"]
    N, dt = params.N, params.delta_t
    x = solution.x
    a = x[program.names["a"]].reshape(N, 2) * As
    # s[N] = s0 + N v0 dt + dt^2 sum_k (N - k - 1/2) a_k
    weight = dt * dt * (N - np.arange(N) - 0.5)
    miss = scenario.base_pos + N * dt * scenario.base_vel + weight @ a - scenario.base_pos
    a = a - np.outer(weight, miss) / (weight @ weight)
    traj = Trajectory.from_accelerations(scenario.base_pos, scenario.base_vel, a, dt)
    raw_s = x[program.names["s"]].reshape(N + 1, 2) * L
    drift = float(np.abs(raw_s - traj.s).max())
    if drift > 1e-3:
        log.warning("re-integrated trajectory drifts %.2e m from the solver positions", drift)
    return traj


def slack_values(solution: ConicSolution, program: ConicProgram, scenario: Scenario) -> dict:
    """Named scalar quantities of a solved subproblem, in physical units."""
    out = {}
    L, Vs, As, Qs = program.names["_scaling"]
    if "eta" in program.names:
        out["eta_bits"] = float(solution.x[program.names["eta"]][0] * Qs)
    if "tau" in program.names:
        out["tau"] = solution.x[program.names["tau"]] * Vs
    if "sigma" in program.names:
        out["sigma"] = solution.x[program.names["sigma"]] * Vs * Vs
        out["sigma_energy"] = float(solution.x[program.names["sigma_energy"]][0])
    return out


def anchor_violation(traj: Trajectory, spec: SubproblemSpec, scenario: Scenario, params: SystemParams) -> dict:
    """How far the expansion-point trajectory is from satisfying the convexified constraints.

    At the expansion point both linearizations are tight, so this measures
    the original constraints with ``tau = ||v||`` and lower-bound rates.
    """
    coeffs = rate_bound_coeffs(spec.local, scenario, params, spec.pad, spec.positions)
    rate_def = 0.0
    for i in spec.candidate_set:
        got = rate_lower_bound(traj.s, coeffs, spec.schedule, i)
        rate_def = max(rate_def, scenario.demands[i] - got)
    speed = traj.speeds[1:]
    psi = speed_lower_bound(traj.v[1:], spec.local.v[1:])
    return dict(
        rate_deficit_bits=rate_def,
        speed_floor=float(max(0.0, params.v_min - speed.min())),
        psi_gap=float(max(0.0, np.max(params.v_min**2 - psi))),
        speed_ceiling=float(max(0.0, speed.max() - params.v_max)),
        accel=float(max(0.0, np.linalg.norm(traj.a, axis=1).max() - params.a_max)),
        energy=float(max(0.0, total_energy(traj, params) - params.E_tot)) if speed.min() > 0 else np.inf,
        kinematics=float(max(traj.recursion_residuals(params.delta_t))),
        boundary=float(max(np.abs(traj.s[0] - scenario.base_pos).max(), np.abs(traj.s[-1] - scenario.base_pos).max(),
                           np.abs(traj.v[0] - scenario.base_vel).max())),
    )


def anchor_feasible(traj, spec, scenario, params, bits_tol=1.0) -> bool:
    v = anchor_violation(traj, spec, scenario, params)
    return (v["rate_deficit_bits"] <= bits_tol and v["kinematics"] <= KINEMATIC_ATOL
            and v["boundary"] <= KINEMATIC_ATOL and v["speed_floor"] <= KINEMATIC_ATOL
            and v["speed_ceiling"] <= KINEMATIC_ATOL and v["accel"] <= KINEMATIC_ATOL
            and v["energy"] <= params.E_tot * 1e-6)
