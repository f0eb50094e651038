import numpy as np
import pytest

from baryfield import cages
from baryfield.neural_field import create_field
from baryfield.simplex_enum import PruningConfig, prune


@pytest.fixture(scope="session")
def star_cage():
    return cages.star_cage()


@pytest.fixture(scope="session")
def star_vss(star_cage):
    return prune(star_cage, PruningConfig.defaults(2))


@pytest.fixture(scope="session")
def star_field(star_cage, star_vss):
    return create_field(star_cage, star_vss, seed=7)


@pytest.fixture(scope="session")
def square_cage():
    return cages.square_cage()


@pytest.fixture(scope="session")
def square_vss(square_cage):
    return prune(square_cage, PruningConfig.defaults(2))


@pytest.fixture(scope="session")
def triangle_cage():
    return cages.triangle_cage()


@pytest.fixture(scope="session")
def triangle_field(triangle_cage):
    vss = prune(triangle_cage, PruningConfig.defaults(2))
    return create_field(triangle_cage, vss, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
