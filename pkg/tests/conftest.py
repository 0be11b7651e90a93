import numpy as np
import pytest

from data_gen import preset, sample_rng
from polytope import polytope_from_inequalities
from settings import DEFAULT_TOLERANCES


def box(lo, hi):
    """Axis-parallel box [lo, hi] as a Polytope."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    n = lo.size
    normals = np.vstack([np.eye(n), -np.eye(n)])
    return polytope_from_inequalities(normals, np.concatenate([hi, -lo]))


@pytest.fixture
def square():
    return preset('square')


@pytest.fixture
def cube():
    return preset('cube')


@pytest.fixture
def hexagon():
    return preset('hexagon')


@pytest.fixture
def trapezoid():
    return preset('trapezoid')


@pytest.fixture
def octahedron():
    return preset('octahedron')


@pytest.fixture
def tol():
    return DEFAULT_TOLERANCES


@pytest.fixture
def rng():
    return sample_rng(7, 0)
