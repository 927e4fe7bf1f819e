import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coopmc.channel import ChannelModel
from coopmc.config import default_config

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg2():
    return default_config(K=2)


@pytest.fixture(scope="session")
def model1():
    return ChannelModel(default_config(K=1))


@pytest.fixture(scope="session")
def model2(cfg2):
    return ChannelModel(cfg2)


@pytest.fixture(scope="session")
def model3():
    return ChannelModel(default_config(K=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
