import math

import numpy as np
import pytest

from spde_sync.torus import Field, TorusGrid


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(d=2, L=2 * math.pi, N=16)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(d=2, L=2 * math.pi, N=32)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(d=2, L=2 * math.pi, N=64)


def random_field(grid, seed, scale=1.0):
    """Plain dense Gaussian samples; rough but bounded."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    return Field.from_values(grid, scale * gen.standard_normal(grid.shape))


@pytest.fixture
def random_field_factory():
    return random_field
