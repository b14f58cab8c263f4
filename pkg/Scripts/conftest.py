import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def crandn(rng):
    """Random complex Gaussian matrices: crandn(rows, cols)."""
    def make(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return make
