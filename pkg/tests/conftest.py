import numpy as np
import pytest

from tinyfdss.chain import ChainConfig


@pytest.fixture
def cfg():
    """Default allocation: 240 shaped bins = 210 data + 2x15 extension."""
    return ChainConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
