import pytest
from numpy import zeros
from numpy.random import default_rng

from causalpatterns.base import RegressionDataset


@pytest.fixture
def correlated_blocks():
    """
    Blocks where y1 depends on both x and y2, with scalar y1 and 2D y2.
    """
    rng = default_rng(11)
    n = 2000
    x = rng.standard_normal((n, 1))
    y2 = rng.standard_normal((n, 2))
    y1 = 0.5 * x + 0.3 * y2[:, :1] - 0.2 * y2[:, 1:] + 0.8 * rng.standard_normal((n, 1))
    return RegressionDataset(x=x, y1=y1, y2=y2)


@pytest.fixture
def independent_blocks():
    rng = default_rng(5)
    n = 3000
    return RegressionDataset(x=rng.standard_normal((n, 1)), y1=rng.standard_normal((n, 1)),
                             y2=rng.standard_normal((n, 1)))


@pytest.fixture
def scalar_bundle_args():
    # 1D blocks with correlation 0.8 and no conditioning block
    return dict(sigma_11=[[1.0]], sigma_22=[[1.0]], sigma_12=[[0.8]], sigma_1x=zeros((1, 0)),
                sigma_2x=zeros((1, 0)), sigma_xx=zeros((0, 0)), n_samples=100)


def joint_covariance(spd, dims, seed):
    """Random joint covariance of (y1, y2, x), split into its blocks."""
    d1, d2, dx = dims
    full = spd(d1 + d2 + dx, seed)
    i1, i2 = slice(0, d1), slice(d1, d1 + d2)
    ix = slice(d1 + d2, d1 + d2 + dx)
    return dict(sigma_11=full[i1, i1], sigma_22=full[i2, i2], sigma_12=full[i1, i2], sigma_1x=full[i1, ix],
                sigma_2x=full[i2, ix], sigma_xx=full[ix, ix], n_samples=1000)
