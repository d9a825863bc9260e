"""Initial trajectories: a circle around the area center, and a designed
loop through every user in counterclockwise angular order."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import Scenario, SystemParams, Trajectory

log = logging.getLogger(__name__)


class InitKind(str, enum.Enum):
    CIRCULAR = "circular"
    DESIGNED = "designed"


@dataclass(frozen=True)
class InitConfig:
    center: np.ndarray
    radius: float
    cruise_speed: float | None = None
    kind: InitKind = InitKind.CIRCULAR

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(2))
        object.__setattr__(self, "kind", InitKind(self.kind))
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    @classmethod
    def default(cls, area_size: float, kind=InitKind.CIRCULAR) -> InitConfig:
        """Circle of radius ``Ls / 4`` about the area center."""
        return cls(np.full(2, area_size / 2.0), area_size / 4.0, kind=kind)

    @property
    def start(self) -> np.ndarray:
        """Point of the circle on the positive x side, where the base sits."""
        return self.center + np.array([self.radius, 0.0])


def circle_speed(radius: float, params: SystemParams) -> float:
    """Continuous-time speed to fly one circle in the mission time."""
    return 2.0 * math.pi * radius / params.T


def circular_velocity(config: InitConfig, params: SystemParams) -> np.ndarray:
    """Initial velocity of the exact discrete circle (tangent, counterclockwise)."""
    theta = 2.0 * math.pi / params.N
    return np.array([0.0, 2.0 * config.radius * math.tan(theta / 2.0) / params.delta_t])


def circular_init(config: InitConfig, params: SystemParams, scenario: Scenario | None = None) -> Trajectory:
    """One counterclockwise lap with uniform angular steps.

    The constant-magnitude rotating acceleration makes the samples lie exactly
    on the circle and satisfy both kinematic recursions.
    """
    speed = circle_speed(config.radius, params)
    if not params.v_min <= speed <= params.v_max:
        raise ValueError(f"circle needs {speed:.2f} m/s, outside [{params.v_min}, {params.v_max}]")
    N, dt = params.N, params.delta_t
    theta = 2.0 * math.pi / N
    v0 = circular_velocity(config, params)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a0 = (rot @ v0 - v0) / dt
    ang = theta * np.arange(N + 1)
    cos, sin = np.cos(ang), np.sin(ang)

    def rotate(vec, c, s):
        return np.stack([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]], axis=-1)

    s = config.center + rotate(np.array([config.radius, 0.0]), cos, sin)
    v = rotate(v0, cos, sin)
    a = rotate(a0, cos[:-1], sin[:-1])
    if np.linalg.norm(a0) > params.a_max:
        # emitted as-is like the designed loop; the optimizer restores feasibility
        log.warning("circle needs %.2f m/s^2 > a_max %.2f", np.linalg.norm(a0), params.a_max)
    return Trajectory(s, v, a)


def polar_angle(points, center) -> tuple[np.ndarray, np.ndarray]:
    """Angle in ``(0, 2*pi]`` and radius about ``center``; a point at the center gets angle 0."""
    d = np.atleast_2d(np.asarray(points, float)) - np.asarray(center, float)
    r = np.hypot(d[:, 0], d[:, 1])
    ang = np.arctan2(d[:, 1], d[:, 0])
    ang = np.where(ang <= 0.0, ang + 2.0 * math.pi, ang)
    ang = np.where(r == 0.0, 0.0, ang)
    return ang, r


def polar_order(scenario: Scenario, center) -> np.ndarray:
    """User indices by increasing angle, ties by increasing radius."""
    ang, r = polar_angle(scenario.positions, center)
    return np.lexsort((r, ang))


def designed_path(scenario: Scenario, config: InitConfig) -> np.ndarray:
    """Vertices of the closed polyline base -> users (angular order) -> base."""
    order = polar_order(scenario, config.center)
    return np.vstack([scenario.base_pos, scenario.positions[order], scenario.base_pos])


def path_length(vertices) -> float:
    return float(np.linalg.norm(np.diff(vertices, axis=0), axis=1).sum())


def resample(vertices, count: int) -> np.ndarray:
    """``count + 1`` points at equal arc-length spacing along a polyline."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(vertices[:1], count + 1, axis=0)
    target = total * np.arange(count + 1) / count
    out = np.column_stack([np.interp(target, cum, vertices[:, k]) for k in range(2)])
    out[-1] = vertices[-1]
    return out


def designed_init(scenario: Scenario, config: InitConfig, params: SystemParams) -> Trajectory:
    """Loop visiting users in angular order, flown at constant arc-length steps.

    Samples ``p[n]`` of the path are spaced ``d_sum / N`` apart.  Positions are
    chord midpoints shifted so ``s[0] = s[N] = base``; velocities are the chord
    velocities, which makes both recursions exact.  The trajectory may break
    speed, acceleration or energy limits and its start velocity is the first
    chord velocity rather than the base velocity.
    """
    N, dt = params.N, params.delta_t
    p = resample(designed_path(scenario, config), N)
    chord = np.diff(p, axis=0) / dt            # c_0 .. c_{N-1}
    v = np.vstack([chord, chord[:1]])           # c_N := c_0 closes the loop
    s = 0.5 * (p + np.vstack([p[1:], p[1:2]])) - 0.5 * chord[0] * dt
    a = np.diff(v, axis=0) / dt
    s[0] = s[-1] = scenario.base_pos
    return Trajectory(s, v, a)


def build_init(kind, scenario: Scenario, params: SystemParams, config: InitConfig | None = None) -> Trajectory:
    kind = InitKind(kind)
    config = config or InitConfig.default(scenario.area_size, kind)
    if kind is InitKind.CIRCULAR:
        return circular_init(config, params, scenario)
    return designed_init(scenario, config, params)
