import numpy as np
import pytest

from attractor_lab.presets import unit_basis
from attractor_lab.spectral import DomainSpec, build_basis


@pytest.fixture(scope="session")
def basis16():
    return unit_basis(16)


@pytest.fixture(scope="session")
def basis2d():
    return build_basis(DomainSpec(2, (1.0, 1.0), 16), 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LOG = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LOG] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash[ACCEPTANCE_LOG]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LOG, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
