import numpy as np
import pytest

from helfrich_fem import DeformationState, generate_icosphere
from helfrich_fem.mesh import generate_benchmark_shape


@pytest.fixture(scope="session")
def icosahedron():
    return generate_icosphere(0, 1.0)


@pytest.fixture(scope="session")
def ico2():
    return generate_icosphere(2, 1.0)


@pytest.fixture(scope="session")
def curved_ico2():
    return generate_benchmark_shape("sphere", 2, order=2)


@pytest.fixture(scope="session")
def prolate2():
    return generate_benchmark_shape("prolate", 2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def zero_state(mesh, order=1):
    return DeformationState(mesh, max(order, mesh.geometry_order))
