import numpy as np
import pytest

from solvcone.cone_geometry import CostMatrix, cone_from_costs


def random_costs(rng, d, hi=0.2, lo=0.0):
    lam = rng.uniform(lo, hi, size=(d, d))
    np.fill_diagonal(lam, 0.0)
    return CostMatrix(lam)


@pytest.fixture(scope="session")
def cone2():
    return cone_from_costs(CostMatrix.uniform(2, 0.1))


@pytest.fixture(scope="session")
def cone3():
    return cone_from_costs(CostMatrix.uniform(3, 0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][3:])):
            terminalreporter.write_line(line)
