import logging
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

logging.getLogger("aerialbs").setLevel(logging.WARNING)

from aerialbs.init_traj import InitConfig, circular_velocity  # noqa: E402
from aerialbs.model import Scenario, SystemParams  # noqa: E402


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_scenario(positions, demands, params=None, area=1500.0):
    params = params or SystemParams()
    circle = InitConfig.default(area)
    return Scenario(area, list(zip(np.asarray(positions, float), demands)), circle.start,
                    circular_velocity(circle, params))


@pytest.fixture
def scenario(params, rng):
    pos = rng.uniform(0, 1500, (6, 2))
    dem = rng.uniform(1e6, 2e7, 6)
    return make_scenario(pos, dem, params)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
