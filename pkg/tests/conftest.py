import numpy as np
import pytest

from teichlab.fields import DiskGrid

ACCEPTANCE = []


@pytest.fixture(scope="session")
def grid():
    """Coarse closed grid shared by the module tests."""
    return DiskGrid(k=10, M=256, per_octave=8, inner=16, closed=True)


@pytest.fixture(scope="session")
def fine_grid():
    return DiskGrid(closed=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
