import functools

import pytest

from wallforge.discretization import Grid
from wallforge.model import PotentialSpec
from wallforge.profile_solver import solve_wall


@functools.lru_cache(maxsize=None)
def wall_report(gamma: float, L: float | None = None, N: int | None = None, kind: str = "symmetric-cubic"):
    """Cached solves shared across test modules."""
    spec = PotentialSpec(kind, gamma=gamma)
    grid = Grid(L, N) if L is not None else Grid.for_spec(spec)
    return spec, solve_wall(spec, grid)


@pytest.fixture(scope="session")
def wall3():
    """gamma = 3 on the default grid."""
    return wall_report(3.0)


@pytest.fixture(scope="session")
def coarse3():
    """gamma = 3 on a small grid for fast operator tests."""
    return wall_report(3.0, 12.0, 1199)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines after the run so they are visible without -s."""
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
