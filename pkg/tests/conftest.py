import numpy as np
import pytest

from pia.channel import SPEED_OF_LIGHT, ScenarioConfig
from pia.geometry import GridSpec

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def scenario():
    return ScenarioConfig()


@pytest.fixture
def grid(scenario):
    return GridSpec(4, 4, scenario.wavelength)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scenario_with_wavelength(lam, **kwargs):
    return ScenarioConfig(f_c=SPEED_OF_LIGHT / lam, **kwargs)
