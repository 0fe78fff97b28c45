import numpy as np
import pytest
from hypothesis import settings

from hypscalar.closed_forms import ProblemParams
from hypscalar.solvers import ground_state_by_shooting

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cubic_quadratic_solution():
    """Positive solution of (N=3, p=3, q=2, lambda=0) on the default grid."""
    rep = ground_state_by_shooting(ProblemParams(3, 3.0, 2.0, 0.0))
    assert rep.converged
    return rep


@pytest.fixture(scope="session")
def sublinear_solution():
    """Nonnegative solution of (N=3, p=3, q=0.5, lambda=0)."""
    rep = ground_state_by_shooting(ProblemParams(3, 3.0, 0.5, 0.0))
    assert rep.converged
    return rep


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
