import numpy as np
import pytest

from levybond.hjm import MaturityGrid, ModelCoefficients, constant_sigma, make_linear_gamma
from levybond.levy import FiniteAtoms


@pytest.fixture
def grid9():
    return MaturityGrid.uniform(1.0, 9)


@pytest.fixture
def nu2():
    return FiniteAtoms(points=[1.0, -1.5], masses=[0.08, 0.05])


@pytest.fixture
def mc_small():
    return ModelCoefficients(sigma=constant_sigma(0.3),
                             gamma=make_linear_gamma(0.5), horizon=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
