import numpy as np
import pytest

from lef import flow, geometry, radial


@pytest.fixture(scope="session")
def disk_grid_small():
    return geometry.PolarGrid(24, 16)


@pytest.fixture(scope="session")
def disk_grid_medium():
    return geometry.PolarGrid(48, 24)


@pytest.fixture(scope="session")
def ball_profile_p5():
    return radial.solve_ball(5.0)


@pytest.fixture(scope="session")
def ball_field_p5(disk_grid_medium, ball_profile_p5):
    return flow.field_from_radial(disk_grid_medium, ball_profile_p5)


def angular_bump(grid, k, r0=0.5, width=0.2, sign=1.0):
    """Radially localized field with cos(k theta) angular dependence."""
    r = np.hypot(grid.xy[:, 0], grid.xy[:, 1])
    th = np.arctan2(grid.xy[:, 1], grid.xy[:, 0])
    vals = sign * np.exp(-((r - r0) / width) ** 2) * np.cos(k * th)
    return flow.ScalarField(grid, vals)


def ring_bump(grid, r_lo, r_hi, sign=1.0):
    """Compactly supported radial bump on r_lo < r < r_hi."""
    r = np.hypot(grid.xy[:, 0], grid.xy[:, 1])
    inside = (r > r_lo) & (r < r_hi)
    vals = np.zeros(grid.n_nodes)
    s = (r[inside] - r_lo) / (r_hi - r_lo)
    vals[inside] = sign * np.sin(np.pi * s) ** 2
    return flow.ScalarField(grid, vals)
