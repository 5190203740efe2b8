import numpy as np
import pytest

from robin_acoustic.mesh import build_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh32():
    return build_mesh(32)


@pytest.fixture(scope="session")
def mesh50():
    return build_mesh(50)
