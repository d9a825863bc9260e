"""Random scenarios and their JSON files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..init_traj import InitConfig, circular_velocity
from ..model import Scenario, SystemParams

SCENARIO_SCHEMA = 1


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 8
    area_size: float = 1500.0
    demand_min: float = 1e6    # bits
    demand_max: float = 2e7

    def __post_init__(self):
        if self.M < 1 or self.area_size <= 0:
            raise ValueError("need M >= 1 and a positive area")
        if not 0 < self.demand_min <= self.demand_max:
            raise ValueError("need 0 < demand_min <= demand_max")


def generate_scenario(seed: int, config: ScenarioConfig | None = None,
                      params: SystemParams | None = None) -> Scenario:
    """Users uniform on the square, demands uniform in the configured range.

    The base sits where the default circle starts, and the base velocity is
    that circle's tangent velocity for the mission length in ``params``.
    Positions and demands depend on the seed only, so a seed gives the same
    users for every mission length.
    """
    config = config or ScenarioConfig()
    params = params or SystemParams()
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, config.area_size, (config.M, 2))
    demand = rng.uniform(config.demand_min, config.demand_max, config.M)
    circle = InitConfig.default(config.area_size)
    return Scenario(config.area_size, list(zip(pos, demand)), circle.start, circular_velocity(circle, params))


def params_to_dict(params: SystemParams) -> dict:
    d = asdict(params)
    d["rate_convention"] = params.rate_convention.value
    return d


def scenario_to_dict(scenario: Scenario, params: SystemParams | None = None, **meta) -> dict:
    d = {
        "schema": SCENARIO_SCHEMA,
        "area_size_m": scenario.area_size,
        "base_pos": scenario.base_pos.tolist(),
        "base_vel": scenario.base_vel.tolist(),
        "users": [{"pos": u.pos.tolist(), "demand_bits": float(u.demand)} for u in scenario.users],
    }
    if params is not None:
        d["params"] = params_to_dict(params)
    d.update(meta)
    return d


def scenario_from_dict(d: dict) -> tuple[Scenario, SystemParams | None]:
    if d.get("schema") != SCENARIO_SCHEMA:
        raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
    users = [(u["pos"], u["demand_bits"]) for u in d["users"]]
    scenario = Scenario(d["area_size_m"], users, d["base_pos"], d["base_vel"])
    params = SystemParams(**d["params"]) if d.get("params") else None
    return scenario, params


def save_scenario(scenario: Scenario, path, params: SystemParams | None = None, **meta) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario, params, **meta), indent=1))


def load_scenario(path) -> tuple[Scenario, SystemParams | None]:
    """Scenario and, when the file carries one, its parameter block."""
    return scenario_from_dict(json.loads(Path(path).read_text()))
