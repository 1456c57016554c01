from pytest import fixture
from numpy import eye
from numpy.random import default_rng

from causalpatterns.synthgen import gen_exp1, gen_exp2


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end runs over full-size series (deselect with -m "not slow")')


# -------------------------------------------------------------------------------------------------
#                               SYNTHETIC SERIES
# -------------------------------------------------------------------------------------------------
@fixture(scope='package')
def exp1_series():
    return gen_exp1(seed=0)


@fixture(scope='package')
def exp1_dataset(exp1_series):
    return exp1_series.regression_dataset()


@fixture(scope='package')
def exp1_truth(exp1_series, exp1_dataset):
    # labels of the regression rows
    return exp1_series.truth[exp1_dataset.times]


@fixture(scope='package')
def exp2_series():
    return gen_exp2(seed=0)


@fixture(scope='package')
def exp2_dataset(exp2_series):
    return exp2_series.regression_dataset()


@fixture(scope='package')
def exp2_truth(exp2_series, exp2_dataset):
    return exp2_series.truth[exp2_dataset.times]


# -------------------------------------------------------------------------------------------------
#                               RANDOM MATRICES
# -------------------------------------------------------------------------------------------------
@fixture(scope='package')
def random_spd():
    def spd(dim, seed):
        rng = default_rng(seed)
        a = rng.standard_normal((dim, dim))
        return a @ a.T + dim * (0.1 + rng.random()) * eye(dim)
    return spd
