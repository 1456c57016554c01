from pytest import fixture
import h5py
from numpy import allclose, asarray
import tempfile

from causalpatterns.mppcca import FitConfig, fit
from causalpatterns.preprocess import EmbeddingSpec, build_regression_blocks
from causalpatterns.clustering import kmeans_baseline, clusterwise_gc, misallocation_rate
from causalpatterns.synthgen import Exp1Params, gen_exp1


FIT_CONFIG = FitConfig(max_iters=60, restarts=2, seed=4)


# BASE TESTING CLASS
# ------------------
class BaseProcessTester:
    @classmethod
    def setup_class(cls):
        cls.process = None
        cls.series_keys = ['Series/Effect', 'Series/Cause', 'Series/Truth']
        cls.processed_keys = None
        cls.test_keys = None

    def test_h5(self, get_sample_h5, truth):
        data = get_sample_h5(series_keys=self.series_keys, proc_keys=self.processed_keys)

        self.process.predict(data)

        for test_key in self.test_keys:
            assert BaseProcessTester.h5_allclose(data, truth, test_key)

    def test_dict(self, get_sample_dict, truth):
        data = get_sample_dict(series_keys=self.series_keys, proc_keys=self.processed_keys)

        self.process.predict(data)

        for test_key in self.test_keys:
            assert BaseProcessTester.dict_allclose(data, truth, test_key)

    @staticmethod
    def h5_allclose(pred, truth, key):
        with h5py.File(pred, 'r') as pr:
            return allclose(pr[key][()], truth[key], equal_nan=True)

    @staticmethod
    def dict_allclose(pred, truth, key):
        return allclose(BaseProcessTester.get_dict_key(pred, key), truth[key], equal_nan=True)

    @staticmethod
    def get_dict_key(dict_, key):
        keys = key.split('/', 1)
        if len(keys) == 2:
            return BaseProcessTester.get_dict_key(dict_[keys[0]], keys[1])
        else:
            return dict_[keys[0]]


# TRUTH DATA
# ----------
@fixture(scope='package')
def sample_series():
    return gen_exp1(Exp1Params(samples_per_cluster=300), seed=1)


@fixture(scope='package')
def truth(sample_series):
    """
    Flat mapping of key to the values each process should produce, computed with the library functions.
    """
    dataset = build_regression_blocks(sample_series.y, sample_series.x, EmbeddingSpec(1, 1, 1), target_ratio=1.0)
    model, resp, trace = fit(dataset, 3, config=FIT_CONFIG)
    report = clusterwise_gc(dataset, resp.labels)
    frame = report.to_frame()
    baseline = kmeans_baseline(dataset, 3, seed=0).labels

    return {
        'Series/Effect': sample_series.y,
        'Series/Cause': sample_series.x,
        'Series/Truth': sample_series.truth,
        'Processed/Blocks/X': dataset.x,
        'Processed/Blocks/Y1': dataset.y1,
        'Processed/Blocks/Y2': dataset.y2,
        'Processed/Blocks/Times': dataset.times,
        'Processed/Mixture/Responsibilities': resp.r,
        'Processed/Mixture/Labels': resp.labels,
        'Processed/Mixture/Log Likelihood': asarray(trace.log_likelihood_per_iter),
        'Processed/Baseline/Labels': baseline,
        'Processed/Granger/Cluster Id': frame['cluster_id'].values,
        'Processed/Granger/N Samples': frame['n_samples'].values,
        'Processed/Granger/Rho1': frame['rho1'].values.astype(float),
        'Processed/Granger/GC Index': frame['gc_index'].values.astype(float),
        'Processed/Granger/Whole GC': report.whole_series_gc,
        'Processed/Evaluation/Misallocation': misallocation_rate(resp.labels, sample_series.truth[dataset.times]),
    }


# RAW DATA
# --------
@fixture(scope='package')
def get_sample_h5(truth):
    def sample_h5(series_keys=None, proc_keys=None):
        tf = tempfile.TemporaryFile()
        with h5py.File(tf, 'w') as data:
            for key in (series_keys or []) + (proc_keys or []):
                data[key] = truth[key]
        return tf
    return sample_h5


@fixture(scope='package')
def get_sample_dict(truth):
    def assign_subdict(dict_, key, value):
        keys = key.split('/', 1)
        if len(keys) == 2:
            if keys[0] not in dict_:
                dict_[keys[0]] = {}
            assign_subdict(dict_[keys[0]], keys[1], value)
        else:
            dict_[keys[0]] = value

    def sample_dict(series_keys=None, proc_keys=None):
        data = {}
        for key in (series_keys or []) + (proc_keys or []):
            assign_subdict(data, key, truth[key])
        return data
    return sample_dict
