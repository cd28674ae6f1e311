import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ectl.convert import convert_controller
from ectl.plant_sim.preset import CHARPOLY, three_inertia_preset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def preset():
    return three_inertia_preset()


@pytest.fixture(scope="session")
def preset_conv(preset):
    return convert_controller(preset[1], charpoly=CHARPOLY)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import criteria

    if criteria.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in criteria.lines():
            terminalreporter.write_line(line)
