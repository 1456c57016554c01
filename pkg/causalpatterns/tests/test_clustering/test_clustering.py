import pytest
import json
from numpy import allclose, isclose, array, zeros, arange, isnan, array_equal, percentile
from numpy.random import default_rng
from pandas import read_csv

from causalpatterns.base import LengthMismatch, InsufficientSamples
from causalpatterns.clustering import ClusterAssignment, GcReport, ClusterGc, KMeans, hard_assign, kmeans, \
    kmeans_baseline, misallocation_rate, misallocation_curve, clusterwise_gc
from causalpatterns.mppcca import Responsibilities
from causalpatterns.synthgen import gen_exp1


class TestClusterAssignment:
    def test_counts(self):
        assignment = ClusterAssignment([0, 2, 2, 1, 2], k=4)

        assert len(assignment) == 5
        assert array_equal(assignment.counts, [1, 1, 3, 0])

    @pytest.mark.parametrize(('labels', 'k'), (([0, 1, 3], 3), ([0, -1], None), ([0.5, 1.0], None),
                                               ([[0, 1]], None)))
    def test_invalid(self, labels, k):
        with pytest.raises(ValueError):
            ClusterAssignment(labels, k=k)


class TestHardAssign:
    @pytest.mark.parametrize(('row', 'label'), (([0.1, 0.7, 0.2], 1), ([0.5, 0.5], 0), ([0.2, 0.4, 0.4], 1)))
    def test_argmax(self, row, label):
        assert hard_assign(Responsibilities([row])).labels[0] == label

    def test_rescaling_invariance(self):
        rng = default_rng(2)
        r = rng.dirichlet(array([1.0, 1.0, 1.0]), size=100)
        scaled = r * rng.uniform(0.1, 10.0, size=(100, 1))

        assert array_equal(hard_assign(r).labels, hard_assign(scaled).labels)

    def test_number_of_clusters(self):
        assert hard_assign(Responsibilities([[1.0, 0.0, 0.0]])).k == 3


class TestKMeans:
    def test_two_blobs(self, two_blobs):
        points, truth = two_blobs

        assert misallocation_rate(kmeans(points, 2, seed=0), truth) == 0.0

    def test_every_point_its_own_cluster(self):
        points = arange(8, dtype=float)[:, None] ** 2
        km = KMeans(8, seed=0).fit(points)

        assert len(set(km.labels_)) == 8
        assert isclose(km.inertia_, 0.0)

    def test_deterministic(self):
        points = default_rng(3).standard_normal((200, 3))

        assert array_equal(kmeans(points, 4, seed=5).labels, kmeans(points, 4, seed=5).labels)

    def test_too_few_points(self):
        with pytest.raises(InsufficientSamples):
            kmeans(zeros((2, 1)), 3)

    @pytest.mark.parametrize(('n_clusters', 'max_iter'), ((0, 300), (2, 0)))
    def test_invalid(self, n_clusters, max_iter):
        with pytest.raises(ValueError):
            KMeans(n_clusters, max_iter=max_iter)

    @pytest.mark.filterwarnings('ignore::Warning')
    @pytest.mark.parametrize('seed', (0, 1, 2))
    def test_objective_never_increases(self, seed):
        points = default_rng(seed).standard_normal((300, 3)) * [1.0, 2.0, 0.5]
        inertia = [KMeans(4, seed=seed, max_iter=m).fit(points).inertia_ for m in range(1, 9)]

        assert all(b <= a * (1 + 1e-12) for a, b in zip(inertia[:-1], inertia[1:]))
        assert inertia[-1] < inertia[0]

    def test_baseline_misallocates(self):
        rates = []
        for seed in range(8):
            series = gen_exp1(seed=seed)
            data = series.regression_dataset()
            rates.append(misallocation_rate(kmeans_baseline(data, 3, seed=seed), series.truth[data.times]))

        assert 0.25 <= percentile(rates, 25) <= percentile(rates, 75) <= 0.55


class TestMisallocationRate:
    def test_identical(self, balanced_truth):
        assert misallocation_rate(balanced_truth, balanced_truth) == 0.0

    def test_constant_estimate(self, balanced_truth):
        assert isclose(misallocation_rate(zeros(3000, dtype=int), balanced_truth), 2000 / 3000)

    def test_permutation_invariance(self, balanced_truth):
        rng = default_rng(7)
        est = rng.integers(0, 4, size=3000)
        order = array([2, 3, 0, 1])

        assert misallocation_rate(order[est], balanced_truth) == misallocation_rate(est, balanced_truth)

    def test_minority_count(self):
        est = [0, 0, 0, 1, 1, 1]
        truth = [0, 0, 1, 1, 1, 2]

        assert isclose(misallocation_rate(est, truth), 2 / 6)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            misallocation_rate([0, 1, 1], [0, 1])

    def test_curve(self, balanced_truth):
        rates = misallocation_curve([zeros(3000, dtype=int), balanced_truth], balanced_truth)

        assert allclose(rates, [2 / 3, 0.0])


class TestClusterwiseGc:
    def test_exp1_ground_truth(self, exp1_dataset, exp1_truth):
        report = clusterwise_gc(exp1_dataset, exp1_truth)
        gc = [c.gc_index for c in report.per_cluster]

        assert report.n_samples == exp1_dataset.n_samples
        assert isclose(gc[0], 4.59, rtol=0.15)
        assert gc[1] < 0.05
        assert gc[2] < 0.05
        assert isclose(report.whole_series_gc, 0.18, rtol=0, atol=0.04)
        assert report.max_gc == gc[0]

    def test_exp2_ground_truth(self, exp2_dataset, exp2_truth):
        report = clusterwise_gc(exp2_dataset, exp2_truth)
        non_causal, causal = report.per_cluster

        assert causal.n_samples == 399
        assert isclose(causal.gc_index, 4.58, rtol=0.15)
        assert non_causal.gc_index < 0.02

    def test_whole_series_single_cluster(self, exp1_dataset):
        report = clusterwise_gc(exp1_dataset, zeros(exp1_dataset.n_samples, dtype=int))

        assert isclose(report.per_cluster[0].gc_index, report.whole_series_gc)

    def test_flagged_clusters(self, exp1_dataset):
        labels = zeros(exp1_dataset.n_samples, dtype=int)
        labels[:2] = 1
        report = clusterwise_gc(exp1_dataset, ClusterAssignment(labels, k=3))
        flags = [c.flag for c in report.per_cluster]

        assert flags[0] is None
        assert flags[1].startswith('InsufficientSamples')
        assert flags[2] == 'empty'
        assert isnan(report.per_cluster[1].gc_index)
        assert report.n_samples == exp1_dataset.n_samples

    def test_length_mismatch(self, exp1_dataset):
        with pytest.raises(LengthMismatch):
            clusterwise_gc(exp1_dataset, [0, 1, 0])


class TestGcReport:
    @pytest.fixture
    def report(self):
        return GcReport((ClusterGc(0, 100, 0.9, 1.2), ClusterGc(1, 2, float('nan'), float('nan'), 'empty')),
                        0.25, whole_series_rho1=0.5)

    def test_dict(self, report):
        doc = json.loads(report.to_json())

        assert doc['per_cluster'][1]['gc_index'] is None
        assert doc['per_cluster'][1]['flag'] == 'empty'
        assert doc['whole_series_gc'] == 0.25

    def test_csv(self, report, tmp_path):
        path = tmp_path / 'gc.csv'
        report.to_csv(str(path))
        frame = read_csv(path)

        assert list(frame.columns) == ['cluster_id', 'n_samples', 'rho1', 'gc_index', 'flag']
        assert frame['gc_index'].iloc[0] == 1.2

    def test_max_gc(self, report):
        assert report.max_gc == 1.2
        assert report.n_samples == 102
