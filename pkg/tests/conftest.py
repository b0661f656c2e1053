import numpy as np
import pytest

from bnsolver.grid import Distribution, GridSpec, build_grid


def power_grid(n, x_max=20.0, p=2.0, **kw):
    return build_grid(GridSpec(node_count=n, x_max=x_max, grading="power", exponent=p, **kw))


def uniform_grid(n, x_max=1.0):
    return build_grid(GridSpec(node_count=n, x_max=x_max, grading="uniform"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return power_grid(16, x_max=5.0)


def random_dist(grid, rng, amp=2.0):
    return Distribution(grid, rng.uniform(0.0, amp, grid.size) * np.exp(-grid.nodes))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
