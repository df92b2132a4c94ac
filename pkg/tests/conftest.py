import numpy as np
import pytest

from cpmschwarz.band import discretize
from cpmschwarz.curve import circle, mobius_boundary

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])


@pytest.fixture(scope="session")
def unit_circle():
    return circle()


@pytest.fixture(scope="session")
def mobius():
    return mobius_boundary()


@pytest.fixture(scope="session")
def circle_op(unit_circle):
    """Unit circle, h = 0.05, p = 4, c = 1, f = sin s."""
    return discretize(unit_circle, 0.05, 4, 1.0, np.sin)


@pytest.fixture(scope="session")
def coarse_circle_op(unit_circle):
    return discretize(unit_circle, 0.1, 4, 1.0, np.sin)
