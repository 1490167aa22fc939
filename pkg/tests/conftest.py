import numpy as np
import pytest

from brwre import systems

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def fair():
    return systems.fair_step()


@pytest.fixture
def lazy():
    return systems.lazy_step()


@pytest.fixture
def env_a():
    return systems.env_a()


@pytest.fixture
def env_c():
    return systems.env_c()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
