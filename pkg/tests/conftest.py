import numpy as np
import pytest

from tpfa.mesh import build_mesh, generate_acute_triangular_grid, generate_square_grid

SEED = 42


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def grid2():
    return generate_square_grid(2)


@pytest.fixture(scope="session")
def grid4():
    return generate_square_grid(4)


@pytest.fixture(scope="session")
def tri2():
    return generate_acute_triangular_grid(2)


@pytest.fixture(scope="session")
def tri4():
    return generate_acute_triangular_grid(4)


@pytest.fixture(scope="session")
def unit_cell():
    return build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]], [[0.5, 0.5]])


@pytest.fixture(scope="session")
def two_cells():
    # two unit squares side by side, cell points at the centers
    v = [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]
    return build_mesh(v, [[0, 1, 4, 3], [1, 2, 5, 4]], [[0.5, 0.5], [1.5, 0.5]])
