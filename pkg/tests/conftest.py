import numpy as np
import pytest

from rwlab.background import Background
from rwlab.evolve import RadialGrid


@pytest.fixture
def schw():
    return Background.schwarzschild(1.0)


@pytest.fixture
def small_grid():
    return RadialGrid.from_spacing(-20.0, 20.0, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split(".")[0]), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
