import numpy as np
import pytest

from hevote.backend import BackendParams, ExactBackend
from oracles import LevelOracle


@pytest.fixture
def small_params():
    # 32 slots keeps the slot arithmetic visible in assertions
    return BackendParams(ring_degree=64)


@pytest.fixture
def exact(small_params):
    return ExactBackend(small_params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def level_oracle():
    return LevelOracle


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[key])
