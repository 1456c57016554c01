"""
Hard cluster assignment, the k-means baseline, misallocation evaluation and per-cluster Granger causality
"""
from dataclasses import dataclass, field
import json
import logging

from numpy import asarray, argmax, bincount, hstack, nan, isnan, isfinite, ndarray, nanmax
from pandas import DataFrame, crosstab
from sklearn.cluster import KMeans as _SkKMeans

from causalpatterns.base import LengthMismatch, InsufficientSamples, ConditioningError, DomainError
from causalpatterns.pcca import granger_from_blocks


__all__ = ['ClusterAssignment', 'ClusterGc', 'GcReport', 'KMeans', 'hard_assign', 'kmeans', 'kmeans_baseline',
           'misallocation_rate', 'misallocation_curve', 'clusterwise_gc']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterAssignment:
    """
    Hard cluster labels.

    Parameters
    ----------
    labels : numpy.ndarray
        (N, ) integer labels in [0, k).
    k : {None, int}, optional
        Number of clusters. Default is None, which uses max(labels) + 1.
    """
    labels: ndarray
    k: int = None

    def __post_init__(self):
        labels = asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1D array.")
        if labels.size > 0 and (labels.astype(int) != labels).any():
            raise ValueError("labels must be integers.")
        labels = labels.astype(int)
        k = (int(labels.max()) + 1 if labels.size > 0 else 0) if self.k is None else int(self.k)
        if labels.size > 0 and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must be in [0, {k}).")
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'k', k)

    def __len__(self):
        return self.labels.size

    @property
    def n_samples(self):
        return self.labels.size

    @property
    def counts(self):
        """(k, ) number of samples per cluster."""
        return bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class ClusterGc:
    """
    Granger causality of one cluster. `rho1` and `gc_index` are NaN when `flag` is set.
    """
    cluster_id: int
    n_samples: int
    rho1: float
    gc_index: float
    flag: str = None


@dataclass(frozen=True)
class GcReport:
    """
    Per-cluster Granger causality indices and the index of the whole data set.

    Parameters
    ----------
    per_cluster : tuple of ClusterGc
        One entry per cluster id, including flagged clusters.
    whole_series_gc : float
        Granger causality index of all samples treated as one cluster.
    """
    per_cluster: tuple
    whole_series_gc: float
    whole_series_rho1: float = field(default=nan)

    @property
    def n_samples(self):
        return sum(c.n_samples for c in self.per_cluster)

    @property
    def max_gc(self):
        """Largest per-cluster index among the clusters that could be evaluated (NaN if none)."""
        values = asarray([c.gc_index for c in self.per_cluster], dtype=float)
        if not isfinite(values).any():
            return nan
        return float(nanmax(values))

    def to_dict(self):
        def clean(value):
            return None if isnan(value) else float(value)

        return {
            'per_cluster': [
                {
                    'cluster_id': c.cluster_id,
                    'n_samples': c.n_samples,
                    'rho1': clean(c.rho1),
                    'gc_index': clean(c.gc_index),
                    'flag': c.flag
                } for c in self.per_cluster
            ],
            'whole_series_gc': clean(self.whole_series_gc),
            'whole_series_rho1': clean(self.whole_series_rho1)
        }

    def to_json(self, indent=None):
        return json.dumps(self.to_dict(), indent=indent)

    def to_frame(self):
        """
        pandas.DataFrame with columns cluster_id, n_samples, rho1, gc_index, flag.
        """
        return DataFrame(
            {
                'cluster_id': [c.cluster_id for c in self.per_cluster],
                'n_samples': [c.n_samples for c in self.per_cluster],
                'rho1': [c.rho1 for c in self.per_cluster],
                'gc_index': [c.gc_index for c in self.per_cluster],
                'flag': [c.flag for c in self.per_cluster]
            },
            columns=['cluster_id', 'n_samples', 'rho1', 'gc_index', 'flag']
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')


class KMeans:
    def __init__(self, n_clusters, seed=None, max_iter=300):
        """
        Lloyd's k-means with k-means++ seeding.

        Parameters
        ----------
        n_clusters : int
            Number of clusters.
        seed : {None, int}, optional
            Seed for the k-means++ initialization. Default is None.
        max_iter : int, optional
            Maximum number of Lloyd iterations. Default is 300. Iteration stops earlier once the assignments
            no longer change.

        Attributes
        ----------
        labels_ : numpy.ndarray
            Cluster label of each point after fitting.
        cluster_centers_ : numpy.ndarray
            (k, d) cluster centers.
        inertia_ : float
            Within-cluster sum of squared distances.
        n_iter_ : int
            Number of Lloyd iterations run.
        """
        if n_clusters < 1:
            raise ValueError("n_clusters must be greater than 0.")
        if max_iter < 1:
            raise ValueError("max_iter must be greater than 0.")
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

        self.labels_ = None
        self.cluster_centers_ = None
        self.inertia_ = None
        self.n_iter_ = None

    def fit(self, points):
        """
        Cluster the points.

        Parameters
        ----------
        points : numpy.ndarray
            (N, d) array of points, N >= n_clusters.

        Returns
        -------
        self : KMeans
        """
        points = asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < self.n_clusters:
            raise InsufficientSamples(f"{points.shape[0]} points cannot form {self.n_clusters} clusters.")

        # tol=0 stops only when the assignments are stable
        km = _SkKMeans(n_clusters=self.n_clusters, init='k-means++', n_init=1, max_iter=self.max_iter, tol=0,
                       random_state=self.seed, algorithm='lloyd')
        km.fit(points)

        self.labels_ = km.labels_.astype(int)
        self.cluster_centers_ = km.cluster_centers_
        self.inertia_ = float(km.inertia_)
        self.n_iter_ = int(km.n_iter_)
        return self


def kmeans(points, k, seed=None):
    """
    k-means clustering of points.

    Parameters
    ----------
    points : numpy.ndarray
        (N, d) points.
    k : int
        Number of clusters. N must be at least k.
    seed : {None, int}, optional
        Seed for the k-means++ initialization; the result is deterministic given the seed.

    Returns
    -------
    assignment : ClusterAssignment
    """
    return ClusterAssignment(KMeans(k, seed=seed).fit(points).labels_, k=k)


def kmeans_baseline(data, k, seed=None):
    """
    k-means on the joint vectors (x, y2, y1) of a regression data set, without standardization.

    Parameters
    ----------
    data : RegressionDataset
    k : int
    seed : {None, int}, optional

    Returns
    -------
    assignment : ClusterAssignment
    """
    return kmeans(hstack((data.x, data.y2, data.y1)), k, seed=seed)


def hard_assign(resp):
    """
    Hard labels from responsibilities, the argmax of every row. Ties go to the lowest component index.

    Parameters
    ----------
    resp : {Responsibilities, numpy.ndarray}
        Responsibilities, or an (N, K) array of them.

    Returns
    -------
    assignment : ClusterAssignment
    """
    r = asarray(getattr(resp, 'r', resp), dtype=float)
    return ClusterAssignment(argmax(r, axis=1), k=r.shape[1])


def _labels(assignment):
    return asarray(getattr(assignment, 'labels', assignment))


def misallocation_rate(est, truth):
    """
    Fraction of samples whose true label is not the majority true label of their estimated cluster.

    Parameters
    ----------
    est : {ClusterAssignment, array_like}
        Estimated labels.
    truth : {ClusterAssignment, array_like}
        True labels.

    Returns
    -------
    rate : float
        Value in [0, 1].

    Raises
    ------
    LengthMismatch
        If `est` and `truth` have different lengths.
    """
    est, truth = _labels(est), _labels(truth)
    if est.size != truth.size:
        raise LengthMismatch(f"Estimated ({est.size}) and true ({truth.size}) labels differ in length.")
    if est.size == 0:
        raise ValueError("Cannot compute a misallocation rate of zero samples.")

    table = crosstab(est, truth)
    minority = (table.sum(axis=1) - table.max(axis=1)).sum()
    return float(minority / est.size)


def misallocation_curve(assignments_per_iter, truth):
    """
    Misallocation rate after every EM iteration.

    Parameters
    ----------
    assignments_per_iter : list
        Hard labels after every E-step, as recorded by :class:`~causalpatterns.mppcca.FitTrace`.
    truth : {ClusterAssignment, array_like}
        True labels.

    Returns
    -------
    rates : numpy.ndarray
    """
    return asarray([misallocation_rate(a, truth) for a in assignments_per_iter])


def clusterwise_gc(data, assignment, ridge=None):
    """
    Granger causality index of every cluster, computed on the cluster's samples as one regression set, and of
    the whole data set.

    Parameters
    ----------
    data : RegressionDataset
        Regression blocks.
    assignment : {ClusterAssignment, array_like}
        Cluster labels of the samples.
    ridge : {None, float}, optional
        Ridge for covariance inversions, see :func:`~causalpatterns.pcca.solve_pcca`.

    Returns
    -------
    report : GcReport
        Clusters that are too small, or whose covariances cannot be inverted, are reported with NaN values and
        the reason in `flag`.
    """
    if not isinstance(assignment, ClusterAssignment):
        assignment = ClusterAssignment(assignment)
    if assignment.n_samples != data.n_samples:
        raise LengthMismatch(f"{assignment.n_samples} labels for {data.n_samples} samples.")

    entries = []
    for j in range(assignment.k):
        mask = assignment.labels == j
        n = int(mask.sum())
        if n == 0:
            entries.append(ClusterGc(j, 0, nan, nan, 'empty'))
            continue
        try:
            est = granger_from_blocks(data.subset(mask), ridge=ridge)
        except (InsufficientSamples, ConditioningError, DomainError) as e:
            logger.info(f"Cluster {j} ({n} samples) not evaluated: {e}")
            entries.append(ClusterGc(j, n, nan, nan, f'{type(e).__name__}: {e}'))
            continue
        entries.append(ClusterGc(j, n, est.rho1, est.gc_index))

    whole = granger_from_blocks(data, ridge=ridge)
    return GcReport(tuple(entries), whole.gc_index, whole_series_rho1=whole.rho1)
