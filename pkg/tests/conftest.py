import numpy as np
import pytest

from models.decoration import DecorationSpec
from models.weight_law import WeightLaw
from services.cascade_service import cascade_service
from services.limit_service import limit_service


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def boundary_law():
    return WeightLaw.boundary_gaussian()


@pytest.fixture
def realization(boundary_law, rng):
    return cascade_service.simulate_tree(boundary_law, 10, rng, seed=1)


@pytest.fixture
def limit_sample(boundary_law, rng):
    """Depth-2 field over D_8 leaves with a loose Poisson truncation"""
    return limit_service.build_limit_sample(boundary_law, 2, 8, 1.0, 2.0, 1e-2, DecorationSpec(), rng)
