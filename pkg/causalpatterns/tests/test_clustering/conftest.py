import pytest
from numpy import concatenate, full, arange
from numpy.random import default_rng


@pytest.fixture
def two_blobs():
    rng = default_rng(1)
    points = concatenate((rng.normal(0.0, 1.0, size=(50, 1)), rng.normal(100.0, 1.0, size=(50, 1))))
    return points, concatenate((full(50, 0), full(50, 1)))


@pytest.fixture
def balanced_truth():
    return arange(3000) // 1000
