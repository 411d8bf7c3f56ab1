import numpy as np
import pytest

from nlborn.discretization import build_disk_grid, make_sensor_layout
from nlborn.forward import Nonlinearity, build_forward_operators
from nlborn.helmholtz import Field, assemble, greens_operator, solve_background
from nlborn.discretization import gaussian_boundary_source


@pytest.fixture(scope="session")
def small_grid():
    return build_disk_grid(0.15)


@pytest.fixture(scope="session")
def small_op(small_grid):
    return assemble(small_grid, 1.0)


@pytest.fixture(scope="session")
def small_gop(small_op):
    return greens_operator(small_op)


@pytest.fixture(scope="session")
def small_u0(small_grid, small_op):
    from nlborn.discretization import BoundarySource
    src = BoundarySource(theta=0.3, g0=1.0, k=1.0, sigma=0.3)
    return solve_background(small_op, gaussian_boundary_source(src, small_grid))


@pytest.fixture(scope="session")
def gaussian_beta(small_grid):
    nodes = small_grid.nodes
    shape = np.exp(-((nodes[:, 0] - 0.2) ** 2 + (nodes[:, 1] + 0.1) ** 2) / (2 * 0.3 ** 2))
    return Field(shape, small_grid)


@pytest.fixture(scope="session")
def small_fw(small_grid):
    layout = make_sensor_layout(4, 8, [1.0], g0=1.0, sigma=0.3)
    return build_forward_operators(small_grid, layout, degrees=(3,))


@pytest.fixture(scope="session")
def toy_setup():
    """3-node instance with an arbitrary dense solution operator."""
    from nlborn.helmholtz import GreensOperator
    rng = np.random.RandomState(42)
    gop = GreensOperator(k=1.3, g_matrix=rng.randn(3, 3))
    u0 = Field(rng.randn(3))
    return gop, u0, rng
