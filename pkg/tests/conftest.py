import numpy as np
import pytest

from univbound.models import PdeParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pde():
    return PdeParams(N=16, M=48)
