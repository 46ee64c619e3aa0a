import numpy as np
import pytest

from scorelab.analysis import standard_family
from scorelab.densities import Logistic, Normal, mixture


@pytest.fixture
def family():
    return standard_family()


@pytest.fixture
def rng():
    return np.random.default_rng(20120101)


PROPER_DENSITIES = [
    Normal(0.0, 1.0),
    Normal(-1.5, 0.7),
    Logistic(0.5, 1.3),
    mixture([0.3, 0.7], [Normal(0.0, 1.0), Normal(3.0, 2.0)]),
    mixture([0.2, 0.5, 0.3], [Logistic(-2.0, 0.5), Normal(0.0, 1.0), Normal(2.5, 0.4)]),
]
