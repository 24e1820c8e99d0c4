import numpy as np
import pytest

from tofsi.coupling import CouplerConfig, FSIProblem
from tofsi.grid import GeometryConfig, build_grid
from tofsi.materials import DensityFilter, InterpolationParams, ProjectionParams

# 6 x 4 elements: 10 design, 2 solid, 12 fluid.  Soft Brinkman contrast so
# the coupled fields are O(1e-2) and the staggered loop converges quickly.
MINI_GEOMETRY = GeometryConfig(channel_length=1.2, channel_height=0.8, design_x0=0.2, design_width=0.8,
                               design_height=0.6, column_x0=0.6, column_width=0.2, column_height=0.4, h=0.2)
MINI_INTERP = InterpolationParams(E_max=1e4, p_alpha=0.1, alpha_max=1e3)

_ACCEPTANCE = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])


@pytest.fixture(scope="session")
def mini_grid():
    return build_grid(MINI_GEOMETRY)


@pytest.fixture
def mini_problem(mini_grid):
    return FSIProblem(mini_grid, interp=MINI_INTERP)


@pytest.fixture(scope="session")
def mini_filter(mini_grid):
    return DensityFilter(mini_grid, 1.5)


@pytest.fixture
def tight():
    return CouplerConfig(tol=1e-11)


@pytest.fixture
def mini_rho(mini_grid):
    return np.random.default_rng(0).uniform(0.2, 0.8, mini_grid.design_elements.size)


@pytest.fixture(scope="session")
def channel_grid():
    """Empty 2 x 1 channel at h = 0.1 (no column)."""
    return build_grid(GeometryConfig(column=False, h=0.1))


@pytest.fixture
def proj():
    return ProjectionParams()
