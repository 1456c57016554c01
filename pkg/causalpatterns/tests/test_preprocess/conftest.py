import pytest
from numpy import arange, sin, cos, hstack
from numpy.random import default_rng


def recording(n_frames, seed=0):
    """
    Two synthetic 21-channel recordings where the second follows the first with a lag.
    """
    rng = default_rng(seed)
    t = arange(n_frames)[:, None] / 30.0
    phase = rng.uniform(0, 6.28, size=(1, 21))
    first = sin(t + phase) + 0.05 * rng.standard_normal((n_frames, 21))
    second = 0.8 * cos(t - 0.3 + phase) + 0.05 * rng.standard_normal((n_frames, 21))
    return first, second


@pytest.fixture(scope='module')
def marker_recording():
    return recording(1200)


@pytest.fixture(scope='module')
def long_marker_recording():
    # 20 minutes at 30 Hz
    return recording(36000)


@pytest.fixture
def random_series():
    return default_rng(4).standard_normal((40, 3))


@pytest.fixture
def scalar_pair():
    rng = default_rng(5)
    x = rng.standard_normal(200)
    y = hstack(([0.0], 0.7 * x[:-1])) + 0.1 * rng.standard_normal(200)
    return y, x
