import numpy as np
import pytest

from iins.grid import Grid, VectorField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_vector(grid, rng, bc="no-slip", walls=False):
    u1 = rng.standard_normal((grid.nz, grid.nx))
    u2 = rng.standard_normal((grid.nz + 1, grid.nx))
    if not walls:
        u2[0] = u2[-1] = 0.0
    return VectorField(grid, u1, u2, bc)


def small_grid(nx=16, nz=12, Lx=2.0 * np.pi, h=1.0):
    return Grid(nx, nz, Lx, h)


# one verdict line per acceptance criterion, collected by tests/test_acceptance.py
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
