"""Physical model of a fixed-wing aerial base station serving ground users.

Channel, rate, propulsion and energy evaluations, the value types shared by
every other module, and a constraint checker for complete missions.

Conventions
-----------
* A trajectory has ``N + 1`` position/velocity samples (indices ``0..N``) and
  ``N`` accelerations (``0..N-1``).  Slot ``n`` (``1..N``) is served from
  ``s[n]``; column ``n - 1`` of a schedule refers to that slot.
* Slot energy pairs the velocity ``v[n]`` with the acceleration ``a[n-1]``
  applied over the preceding interval, so every acceleration is used once.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

# feasibility tolerances
ENERGY_RTOL = 1e-6
KINEMATIC_ATOL = 1e-6
DEMAND_ATOL_BITS = 1.0
ZERO_SPEED = 1e-9


class RateConvention(str, enum.Enum):
    """How many bits one scheduled slot carries.

    ``physical`` multiplies the spectral efficiency by bandwidth and slot
    duration; ``paper_literal`` multiplies by bandwidth only.
    """

    PHYSICAL = "physical"
    PAPER_LITERAL = "paper_literal"


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _frozen(x, shape=None) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Channel, power, kinematic, energy and discretization constants.

    Defaults reproduce the simulation table of the reference setup with a
    100 s mission (``N = 200`` slots of 0.5 s) and 25 kJ of on-board energy.
    """

    H: float = 100.0
    B: float = 1e6
    P: float = 0.01
    beta0: float = db_to_linear(-50.0)
    sigma2: float = dbm_to_watts(-110.0)
    delta_t: float = 0.5
    N: int = 200
    v_max: float = 80.0
    v_min: float = 3.0
    a_max: float = 6.0
    c1: float = 9.26e-4
    c2: float = 2250.0
    g: float = 9.8
    E_tot: float = 2.5e4
    rate_convention: RateConvention = RateConvention.PHYSICAL

    def __post_init__(self):
        object.__setattr__(self, "rate_convention", RateConvention(self.rate_convention))
        object.__setattr__(self, "N", int(self.N))
        if not 0 < self.v_min < self.v_max:
            raise ValueError("need 0 < v_min < v_max")
        if self.a_max <= 0 or self.delta_t <= 0 or self.E_tot <= 0:
            raise ValueError("a_max, delta_t and E_tot must be positive")
        if self.N < 2:
            raise ValueError("need at least two slots")
        if self.H <= 0 or self.B <= 0 or self.P < 0:
            raise ValueError("H and B must be positive, P non-negative")
        if self.beta0 <= 0 or self.sigma2 <= 0:
            raise ValueError("beta0 and sigma2 must be positive")

    @property
    def zeta0(self) -> float:
        """Reference received SNR ``beta0 / sigma2``."""
        return self.beta0 / self.sigma2

    @property
    def T(self) -> float:
        return self.N * self.delta_t

    @property
    def bits_factor(self) -> float:
        """Bits per slot per bit/s/Hz of spectral efficiency."""
        if self.rate_convention is RateConvention.PHYSICAL:
            return self.B * self.delta_t
        return self.B

    def with_(self, **changes) -> SystemParams:
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SystemParams(**values)

    @classmethod
    def for_mission(cls, T: float, E_tot: float, **kw) -> SystemParams:
        dt = kw.pop("delta_t", 0.5)
        return cls(N=int(round(T / dt)), delta_t=dt, E_tot=E_tot, **kw)


@dataclass(frozen=True)
class UserSpec:
    pos: np.ndarray
    demand: float

    def __post_init__(self):
        object.__setattr__(self, "pos", _frozen(self.pos, (2,)))
        if not self.demand > 0:
            raise ValueError("user demand must be strictly positive")


@dataclass(frozen=True)
class Scenario:
    """Target area, users and the charging base."""

    area_size: float
    users: tuple
    base_pos: np.ndarray
    base_vel: np.ndarray

    def __post_init__(self):
        users = tuple(u if isinstance(u, UserSpec) else UserSpec(*u) for u in self.users)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "base_pos", _frozen(self.base_pos, (2,)))
        object.__setattr__(self, "base_vel", _frozen(self.base_vel, (2,)))
        if not users:
            raise ValueError("scenario needs at least one user")
        for u in users:
            if np.any(u.pos < 0) or np.any(u.pos > self.area_size):
                raise ValueError(f"user at {u.pos} lies outside [0, {self.area_size}]^2")

    @property
    def M(self) -> int:
        return len(self.users)

    @property
    def positions(self) -> np.ndarray:
        return np.array([u.pos for u in self.users])

    @property
    def demands(self) -> np.ndarray:
        return np.array([u.demand for u in self.users])

    @property
    def center(self) -> np.ndarray:
        return np.full(2, self.area_size / 2.0)

    def with_positions(self, positions) -> Scenario:
        """Copy with moved users; positions are clipped into the area."""
        positions = np.clip(np.asarray(positions, float), 0.0, self.area_size)
        users = tuple(UserSpec(p, u.demand) for p, u in zip(positions, self.users))
        return Scenario(self.area_size, users, self.base_pos, self.base_vel)


@dataclass(frozen=True)
class Trajectory:
    """Sampled positions, velocities and accelerations of one mission."""

    s: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", _frozen(self.s))
        object.__setattr__(self, "v", _frozen(self.v))
        object.__setattr__(self, "a", _frozen(self.a))
        n = self.a.shape[0]
        if self.s.shape != (n + 1, 2) or self.v.shape != (n + 1, 2) or self.a.shape != (n, 2):
            raise ValueError("trajectory needs s, v of shape (N+1, 2) and a of shape (N, 2)")

    @property
    def N(self) -> int:
        return self.a.shape[0]

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)

    @classmethod
    def from_accelerations(cls, s0, v0, a, delta_t: float) -> Trajectory:
        """Integrate the discrete kinematics from an initial state."""
        a = np.asarray(a, float)
        n = a.shape[0]
        v = np.empty((n + 1, 2))
        s = np.empty((n + 1, 2))
        v[0] = v0
        s[0] = s0
        v[1:] = v[0] + np.cumsum(a, axis=0) * delta_t
        s[1:] = s[0] + np.cumsum(v[:-1] * delta_t + 0.5 * a * delta_t**2, axis=0)
        return cls(s, v, a)

    def recursion_residuals(self, delta_t: float) -> tuple[float, float]:
        """Largest violation of the position and velocity recursions."""
        ds = self.s[1:] - self.s[:-1] - self.v[:-1] * delta_t - 0.5 * self.a * delta_t**2
        dv = self.v[1:] - self.v[:-1] - self.a * delta_t
        return float(np.abs(ds).max(initial=0.0)), float(np.abs(dv).max(initial=0.0))


@dataclass(frozen=True)
class Schedule:
    """Binary user/slot association; column ``n - 1`` serves slot ``n``."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha)
        if alpha.ndim != 2:
            raise ValueError("schedule must be an M x N matrix")
        if not np.all((alpha == 0) | (alpha == 1)):
            raise ValueError("schedule entries must be binary")
        alpha = alpha.astype(bool)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    @classmethod
    def empty(cls, M: int, N: int) -> Schedule:
        return cls(np.zeros((M, N), dtype=bool))

    @classmethod
    def from_owner(cls, owner: Sequence[int], M: int) -> Schedule:
        """Build from a per-slot owner list where ``-1`` leaves a slot idle."""
        owner = np.asarray(owner, int)
        alpha = np.zeros((M, owner.size), dtype=bool)
        used = owner >= 0
        alpha[owner[used], np.flatnonzero(used)] = True
        return cls(alpha)

    def owner(self) -> np.ndarray:
        out = np.full(self.alpha.shape[1], -1)
        rows, cols = np.nonzero(self.alpha)
        out[cols] = rows
        return out

    def exclusive(self) -> bool:
        return bool(np.all(self.alpha.sum(axis=0) <= 1))


@dataclass(frozen=True)
class CoverageResult:
    rho: np.ndarray
    delivered: np.ndarray = field(repr=False)

    @property
    def covered_count(self) -> int:
        return int(self.rho.sum())

    @property
    def covered_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.rho))


# ---------------------------------------------------------------------------
# closed-form evaluations


def sq_horizontal(uav_pos, user_pos) -> np.ndarray:
    d = np.asarray(uav_pos, float) - np.asarray(user_pos, float)
    return np.sum(d * d, axis=-1)


def distance(uav_pos, user_pos, H: float):
    """Slant range between the aerial BS at altitude ``H`` and a ground user."""
    if H <= 0:
        raise ValueError("altitude must be positive")
    return np.sqrt(H * H + sq_horizontal(uav_pos, user_pos))


def snr_from_sq(d2, params: SystemParams):
    """SNR for a squared horizontal distance ``d2``."""
    return params.P * params.zeta0 / (params.H**2 + np.asarray(d2, float))


def snr(uav_pos, user_pos, params: SystemParams, pad: float = 0.0):
    """Received SNR; ``pad`` lengthens the horizontal distance (worst case ULI)."""
    d2 = sq_horizontal(uav_pos, user_pos)
    if pad:
        d2 = (np.sqrt(d2) + pad) ** 2
    return snr_from_sq(d2, params)


def bits_per_slot(uav_pos, user_pos, params: SystemParams, pad: float = 0.0):
    """Bits delivered in one slot served from ``uav_pos``."""
    return params.bits_factor * np.log2(1.0 + snr(uav_pos, user_pos, params, pad))


def rate_rows(traj: Trajectory, positions, params: SystemParams, pad: float = 0.0) -> np.ndarray:
    """``M x N`` matrix of per-slot bits for every user position."""
    positions = np.atleast_2d(np.asarray(positions, float))
    return bits_per_slot(traj.s[None, 1:, :], positions[:, None, :], params, pad)


def total_bits(traj: Trajectory, sched: Schedule, scenario: Scenario, user_index: int,
               params: SystemParams, pad: float = 0.0) -> float:
    """Bits delivered to one user over all its scheduled slots."""
    M, N = sched.shape
    if N != traj.N or M != scenario.M:
        raise ValueError(f"schedule {sched.shape} does not match M={scenario.M}, N={traj.N}")
    cols = np.flatnonzero(sched.alpha[user_index])
    if cols.size == 0:
        return 0.0
    per = bits_per_slot(traj.s[cols + 1], scenario.users[user_index].pos, params, pad)
    return float(np.sum(per))


def delivered_bits(traj: Trajectory, sched: Schedule, positions, params: SystemParams,
                   pad: float = 0.0) -> np.ndarray:
    M, N = sched.shape
    if N != traj.N:
        raise ValueError(f"schedule has {N} slots, trajectory has {traj.N}")
    rates = rate_rows(traj, positions, params, pad)
    if rates.shape[0] != M:
        raise ValueError("schedule rows do not match users")
    return np.sum(rates * sched.alpha, axis=1)


def coverage(traj: Trajectory, sched: Schedule, scenario: Scenario, params: SystemParams,
             pad: float = 0.0, positions=None) -> CoverageResult:
    """Which users receive their full demand (within one bit)."""
    pos = scenario.positions if positions is None else positions
    got = delivered_bits(traj, sched, pos, params, pad)
    rho = got >= scenario.demands - DEMAND_ATOL_BITS
    rho.setflags(write=False)
    return CoverageResult(rho, got)


def propulsion_power(v, a, params: SystemParams):
    """Fixed-wing propulsion power for velocity ``v`` and acceleration ``a``.

    Accepts single 2-vectors or stacked ``(..., 2)`` arrays.
    """
    speed = np.linalg.norm(np.asarray(v, float), axis=-1)
    if np.any(speed < ZERO_SPEED):
        raise ValueError("propulsion model is singular at zero speed")
    acc2 = np.sum(np.asarray(a, float) ** 2, axis=-1)
    return params.c1 * speed**3 + params.c2 / speed * (1.0 + acc2 / params.g**2)


def total_energy(traj: Trajectory, params: SystemParams) -> float:
    """Propulsion energy over slots ``1..N``."""
    return float(np.sum(propulsion_power(traj.v[1:], traj.a, params)) * params.delta_t)


def power_optimal_speed(params: SystemParams) -> float:
    """Speed minimizing steady straight-flight power."""
    return (params.c2 / (3.0 * params.c1)) ** 0.25


def min_flight_power(params: SystemParams) -> float:
    """Lowest achievable propulsion power at an admissible speed."""
    v = min(max(power_optimal_speed(params), params.v_min), params.v_max)
    return params.c1 * v**3 + params.c2 / v


def min_mission_energy(params: SystemParams) -> float:
    """Lower bound on the energy of any admissible mission of ``N`` slots."""
    return min_flight_power(params) * params.N * params.delta_t


# ---------------------------------------------------------------------------
# constraint checking


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: int
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    energy: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def of(self, constraint: str) -> list[Violation]:
        return [v for v in self.violations if v.constraint == constraint]

    def kinds(self) -> set[str]:
        return {v.constraint for v in self.violations}


def validate(traj: Trajectory, sched: Schedule | None, scenario: Scenario,
             params: SystemParams, *, check_boundary: bool = True) -> ValidationReport:
    """Report every violated mission constraint with its index and size."""
    out: list[Violation] = []
    dt = params.delta_t
    if traj.N != params.N:
        out.append(Violation("slot_count", -1, float(abs(traj.N - params.N))))
        return ValidationReport(tuple(out), math.nan)

    if sched is not None:
        if sched.shape != (scenario.M, params.N):
            out.append(Violation("schedule_shape", -1, 1.0))
        else:
            load = sched.alpha.sum(axis=0)
            for n in np.flatnonzero(load > 1):
                out.append(Violation("exclusivity", int(n) + 1, float(load[n] - 1)))

    ds = traj.s[1:] - traj.s[:-1] - traj.v[:-1] * dt - 0.5 * traj.a * dt**2
    dv = traj.v[1:] - traj.v[:-1] - traj.a * dt
    for name, res in (("position_recursion", ds), ("velocity_recursion", dv)):
        mag = np.linalg.norm(res, axis=1)
        for n in np.flatnonzero(mag > KINEMATIC_ATOL):
            out.append(Violation(name, int(n), float(mag[n])))

    if check_boundary:
        for name, idx, got, want in (("start_position", 0, traj.s[0], scenario.base_pos),
                                     ("end_position", params.N, traj.s[-1], scenario.base_pos),
                                     ("start_velocity", 0, traj.v[0], scenario.base_vel)):
            err = float(np.linalg.norm(got - want))
            if err > KINEMATIC_ATOL:
                out.append(Violation(name, idx, err))

    speed = traj.speeds[1:]
    for n in np.flatnonzero(speed > params.v_max + KINEMATIC_ATOL):
        out.append(Violation("max_speed", int(n) + 1, float(speed[n] - params.v_max)))
    for n in np.flatnonzero(speed < params.v_min - KINEMATIC_ATOL):
        out.append(Violation("min_speed", int(n) + 1, float(params.v_min - speed[n])))
    acc = np.linalg.norm(traj.a, axis=1)
    for n in np.flatnonzero(acc > params.a_max + KINEMATIC_ATOL):
        out.append(Violation("max_acceleration", int(n), float(acc[n] - params.a_max)))

    if np.all(speed >= ZERO_SPEED):
        energy = total_energy(traj, params)
        if energy > params.E_tot * (1.0 + ENERGY_RTOL):
            out.append(Violation("energy", -1, energy - params.E_tot))
    else:
        energy = math.inf
        out.append(Violation("energy", -1, math.inf))
    return ValidationReport(tuple(out), energy)
