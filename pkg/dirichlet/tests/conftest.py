import numpy as np
import pytest

from dirichlet.distributions import NIWParams
from dirichlet.encoder import EncoderParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def two_clusters():
    """
    Two unit-covariance 2-D clusters ten apart, 100 rows each, with their true labels.
    """
    rng = np.random.default_rng(11)
    means = np.array([[10.0, 10.0], [20.0, 10.0]])
    labels = np.repeat([0, 1], 100)
    X = means[labels] + rng.standard_normal((200, 2))
    return X, labels


@pytest.fixture
def three_clusters():
    rng = np.random.default_rng(12)
    means = np.array([[10.0, 10.0], [20.0, 10.0], [15.0, 20.0]])
    labels = np.repeat([0, 1, 2], 100)
    X = means[labels] + rng.standard_normal((300, 2))
    return X, labels


@pytest.fixture
def random_encoders():
    def make(dim, T, hidden=None, seed=0):
        rng = np.random.default_rng(seed)
        return [EncoderParams.initialize(dim, hidden, rng, zero_output=False) for _ in range(T)]
    return make


@pytest.fixture
def default_prior():
    return NIWParams.default
