"""
Feature vectors, delay embeddings and PCA-reduced regression blocks from multichannel recordings
"""
from dataclasses import dataclass
import logging

from numpy import asarray, diff, hstack, arange, ndarray, searchsorted, cumsum, argmax, abs as npabs, eye, \
    allclose
from sklearn.decomposition import PCA

from causalpatterns.base import RegressionDataset, TooShort, DegenerateData, LengthMismatch, InsufficientSamples


__all__ = ['EmbeddingSpec', 'PcaBasis', 'velocity', 'feature', 'embed', 'embedding_times', 'pca_fit',
           'build_regression_blocks']

logger = logging.getLogger(__name__)


def _as_series(values, name='series'):
    series = asarray(values, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    elif series.ndim != 2:
        raise ValueError(f"{name} must be a 1D or 2D array.")
    return series


@dataclass(frozen=True)
class EmbeddingSpec:
    """
    Delay embedding parameters, in frames.

    Parameters
    ----------
    delay : int
        Lag d of the most recent stacked frame.
    stride : int
        Step s between stacked frames.
    window : int
        Window length tau. Must be a multiple of `stride`; tau / s frames are stacked.
    """
    delay: int
    stride: int
    window: int

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be greater than or equal to 0.")
        if self.stride < 1:
            raise ValueError("stride must be greater than 0.")
        if self.window < self.stride:
            raise ValueError("window must be greater than or equal to stride.")
        if self.window % self.stride != 0:
            raise ValueError("window must be divisible by stride.")

    @property
    def n_frames(self):
        """Number of stacked frames, tau / s."""
        return self.window // self.stride

    def width(self, n_features):
        return n_features * self.n_frames

    def n_rows(self, n_frames):
        return n_frames - self.delay - self.window + 1


@dataclass(frozen=True)
class PcaBasis:
    """
    Principal component basis.

    Parameters
    ----------
    mean : numpy.ndarray
        (d, ) mean of the training data.
    components : numpy.ndarray
        (d, r) orthonormal principal directions, in columns.
    explained_ratio : numpy.ndarray
        (r, ) fraction of the total variance along each direction, descending.
    """
    mean: ndarray
    components: ndarray
    explained_ratio: ndarray

    def __post_init__(self):
        mean = asarray(self.mean, dtype=float).ravel()
        components = asarray(self.components, dtype=float).reshape((mean.size, -1))
        ratio = asarray(self.explained_ratio, dtype=float).ravel()
        if ratio.size != components.shape[1]:
            raise ValueError("explained_ratio must have one entry per component.")
        if not allclose(components.T @ components, eye(components.shape[1]), rtol=0, atol=1e-10):
            raise ValueError("components must have orthonormal columns.")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'components', components)
        object.__setattr__(self, 'explained_ratio', ratio)

    @property
    def n_components(self):
        return self.components.shape[1]

    def transform(self, data):
        """(N, d) data -> (N, r) projection."""
        return (_as_series(data, 'data') - self.mean) @ self.components

    def inverse_transform(self, scores):
        """(N, r) projection -> (N, d) reconstruction."""
        return _as_series(scores, 'scores') @ self.components.T + self.mean

    def to_dict(self):
        return {
            'mean': self.mean.tolist(),
            'components': self.components.ravel().tolist(),
            'n_components': self.n_components,
            'explained_ratio': self.explained_ratio.tolist()
        }

    @classmethod
    def from_dict(cls, values):
        mean = asarray(values['mean'], dtype=float)
        return cls(
            mean=mean,
            components=asarray(values['components'], dtype=float).reshape((mean.size, values['n_components'])),
            explained_ratio=asarray(values['explained_ratio'], dtype=float)
        )


def velocity(position):
    """
    First difference along time, velocity(t) = position(t) - position(t - 1).

    Parameters
    ----------
    position : numpy.ndarray
        (T, d) series, T >= 2.

    Returns
    -------
    velocity : numpy.ndarray
        (T - 1, d) series aligned to times 1, ..., T - 1.
    """
    position = _as_series(position, 'position')
    if position.shape[0] < 2:
        raise TooShort("At least 2 frames are needed to compute a velocity.")
    return diff(position, axis=0)


def feature(position):
    """
    Per-frame feature vectors (position; velocity).

    Parameters
    ----------
    position : numpy.ndarray
        (T, d) series, T >= 2.

    Returns
    -------
    feature : numpy.ndarray
        (T - 1, 2d) features aligned to times 1, ..., T - 1. The first d columns are the positions, the last d
        the velocities.
    """
    position = _as_series(position, 'position')
    return hstack((position[1:], velocity(position)))


def embedding_times(n_frames, spec):
    """
    Time indices of the embedding rows, d + tau - 1, ..., T - 1.
    """
    return arange(spec.delay + spec.window - 1, n_frames)


def embed(features, spec):
    """
    Delay embedding. The row for time t stacks feature(t - d - j s) for j = 0, ..., tau / s - 1.

    Parameters
    ----------
    features : numpy.ndarray
        (T, f) feature series.
    spec : EmbeddingSpec
        Embedding parameters.

    Returns
    -------
    embedding : numpy.ndarray
        (T - d - tau + 1, f tau / s) embedding, one row per time in :func:`embedding_times`.

    Raises
    ------
    TooShort
        If the series does not contain a full window (T < d + tau).
    """
    features = _as_series(features, 'features')
    n_frames, n_feat = features.shape
    if spec.n_rows(n_frames) < 1:
        raise TooShort(f"Series of {n_frames} frames is too short for delay {spec.delay} and window "
                       f"{spec.window}.")

    times = embedding_times(n_frames, spec)
    index = times[:, None] - spec.delay - arange(spec.n_frames)[None, :] * spec.stride
    return features[index].reshape((times.size, spec.width(n_feat)))


def pca_fit(data, target_ratio=0.9):
    """
    PCA basis with the fewest components whose cumulative explained variance ratio reaches the target.

    Parameters
    ----------
    data : numpy.ndarray
        (N, d) data, N >= 2.
    target_ratio : float, optional
        Target cumulative contribution ratio in (0, 1]. Default is 0.9.

    Returns
    -------
    basis : PcaBasis
        Each direction's sign is fixed so that its largest-magnitude loading is positive.

    Raises
    ------
    DegenerateData
        If the total variance of `data` is 0.
    """
    data = _as_series(data, 'data')
    if not 0 < target_ratio <= 1:
        raise ValueError("target_ratio must be in (0, 1].")
    if data.shape[0] < 2:
        raise InsufficientSamples("PCA needs at least 2 samples.")
    if data.var(axis=0).sum() == 0:
        raise DegenerateData("Data has zero total variance.")

    pca = PCA(svd_solver='full').fit(data)
    ratio = pca.explained_variance_ratio_
    # small slack so a target of 1.0 is reached despite rounding
    r = min(int(searchsorted(cumsum(ratio), target_ratio - 1e-12)) + 1, ratio.size)

    components = pca.components_[:r].T.copy()
    lead = argmax(npabs(components), axis=0)
    signs = components[lead, arange(r)] < 0
    components[:, signs] *= -1

    logger.debug(f"PCA kept {r} of {data.shape[1]} dimensions ({cumsum(ratio)[r - 1]:.4f} of the variance).")
    return PcaBasis(mean=pca.mean_, components=components, explained_ratio=ratio[:r])


def build_regression_blocks(effect, cause, spec, target_ratio=0.9, kinematic=False, return_bases=False):
    """
    Regression blocks for Granger causality from `cause` to `effect`.

    Parameters
    ----------
    effect : numpy.ndarray
        (T, d_e) effect series.
    cause : numpy.ndarray
        (T, d_c) cause series, time aligned with `effect`.
    spec : EmbeddingSpec
        Delay embedding parameters.
    target_ratio : float, optional
        PCA cumulative contribution ratio for every block. Default is 0.9.
    kinematic : bool, optional
        Treat the inputs as positions and use (position; velocity) feature vectors. Default is False, which
        uses the series values directly as features.
    return_bases : bool, optional
        Also return the fitted PCA bases. Default is False.

    Returns
    -------
    dataset : RegressionDataset
        y1 = PCA of the effect features at t (effect present), y2 = PCA of the cause embedding (cause past),
        x = PCA of the effect embedding (effect past). `times` holds the row of the input series each sample
        refers to.
    bases : dict, optional
        PcaBasis for the keys 'x', 'y1' and 'y2'. Only returned if `return_bases` is True.
    """
    effect = _as_series(effect, 'effect')
    cause = _as_series(cause, 'cause')
    if effect.shape[0] != cause.shape[0]:
        raise LengthMismatch(f"effect ({effect.shape[0]} frames) and cause ({cause.shape[0]} frames) must be "
                             f"time aligned.")

    offset = 0
    if kinematic:
        effect, cause = feature(effect), feature(cause)
        offset = 1

    x_emb = embed(effect, spec)
    y2_emb = embed(cause, spec)
    times = embedding_times(effect.shape[0], spec)
    present = effect[times]

    bases = {
        'x': pca_fit(x_emb, target_ratio),
        'y1': pca_fit(present, target_ratio),
        'y2': pca_fit(y2_emb, target_ratio)
    }
    dataset = RegressionDataset(
        x=bases['x'].transform(x_emb),
        y1=bases['y1'].transform(present),
        y2=bases['y2'].transform(y2_emb),
        times=times + offset
    )
    logger.info(f"Built {dataset}")

    if return_bases:
        return dataset, bases
    return dataset
