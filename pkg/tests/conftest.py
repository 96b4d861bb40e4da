import numpy as np
import pytest

from chxray import make_euclidean, make_hyperbolic, make_warped_preset


@pytest.fixture(scope="session")
def E2():
    return make_euclidean(2)


@pytest.fixture(scope="session")
def H2():
    return make_hyperbolic(2, 1.0)


@pytest.fixture(scope="session")
def P3():
    return make_warped_preset("powerlaw:1,3")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
