import pytest
from numpy import zeros, eye, array
from numpy.random import default_rng

from causalpatterns.base import RegressionDataset
from causalpatterns.mppcca import ComponentParams, MppccaModel


def unit_component(mu, pi=1.0, dx=0, dt=0):
    dim = len(mu)
    return ComponentParams(pi=pi, mu=array(mu, dtype=float), w_x=zeros((dim, dx)), w_t=zeros((dim, dt)),
                           psi=eye(dim))


def random_dataset(seed, n=60, dx=1, d1=1, d2=1):
    rng = default_rng(seed)
    x = rng.standard_normal((n, dx))
    y2 = rng.standard_normal((n, d2))
    y1 = x[:, :1] * rng.standard_normal() + y2[:, :1] * rng.standard_normal() + rng.standard_normal((n, d1))
    return RegressionDataset(x=x, y1=y1, y2=y2)


@pytest.fixture
def origin_sample():
    return RegressionDataset(x=zeros((1, 0)), y1=[[0.0]], y2=[[0.0]])


@pytest.fixture
def standard_model():
    return MppccaModel((unit_component([0.0, 0.0]), ), dt=0, eta_c=0.0)


@pytest.fixture
def random_model():
    rng = default_rng(17)
    comps = []
    for pi in (0.2, 0.3, 0.5):
        a = rng.standard_normal((3, 3))
        comps.append(ComponentParams(pi=pi, mu=rng.standard_normal(3), w_x=rng.standard_normal((3, 2)),
                                     w_t=rng.standard_normal((3, 1)), psi=a @ a.T + 0.5 * eye(3)))
    return MppccaModel(tuple(comps), dt=1, eta_c=1e-6, eta_wx=1e-6, d1=1)


@pytest.fixture
def random_model_data():
    rng = default_rng(23)
    return RegressionDataset(x=rng.standard_normal((50, 2)), y1=rng.standard_normal((50, 1)),
                             y2=rng.standard_normal((50, 2)))
