import numpy as np
import pytest

from qrelax.grid import make_grid


@pytest.fixture
def grid1():
    return make_grid(1, 128, 1.0)


@pytest.fixture
def grid2():
    return make_grid(2, 32, 1.0)


@pytest.fixture
def x128(grid1):
    return grid1.coords()[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def _trig_eval(f, x):
    """Evaluate the trigonometric interpolant of 1D grid samples ``f`` at ``x`` (period 1)."""
    n = f.size
    c = np.fft.rfft(f) / n
    k = np.arange(c.size)
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return float(np.sum(w * (c * np.exp(2j * np.pi * k * x)).real))


@pytest.fixture
def trig_eval():
    return _trig_eval


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
