"""
Seeded synthetic series with known causal patterns and ground-truth labels.

Random numbers come from NumPy's PCG64 bit generator seeded through ``SeedSequence(seed)``. Uniforms are the
top 53 bits of each raw 64-bit output scaled to [0, 1), and standard normals come from the Box-Muller
transform of consecutive uniform pairs (cosine output first, then sine). A series draws all of its x noise
first, then all of its y noise, so the same seed gives bit-identical series on every platform.
"""
from dataclasses import dataclass, field
import logging
from numbers import Integral

from numpy import asarray, empty, zeros, sqrt, log1p, cos, sin, pi, uint64, ndarray, arange, concatenate, \
    flatnonzero, diff
from numpy.random import PCG64, SeedSequence
from scipy.signal import lfilter
from pandas import DataFrame, read_csv

from causalpatterns.base import RegressionDataset, LengthMismatch, DegenerateData


__all__ = ['GaussianStream', 'ClusterParams', 'Exp1Params', 'Exp2Params', 'LabeledSeries', 'gen_exp1',
           'gen_exp2']

logger = logging.getLogger(__name__)

NOISE_CONVENTIONS = ('std', 'variance')


class GaussianStream:
    def __init__(self, seed):
        """
        Portable stream of uniform and standard normal variates.

        Parameters
        ----------
        seed : int
            Non-negative seed, passed through numpy.random.SeedSequence to a PCG64 bit generator.
        """
        self.seed = seed
        self.bit_generator = PCG64(SeedSequence(seed))

    def uniforms(self, n):
        """
        n uniforms in [0, 1) with 53 random bits each.
        """
        raw = asarray(self.bit_generator.random_raw(n), dtype=uint64)
        return (raw >> uint64(11)).astype(float) * 2.0 ** -53

    def normals(self, n):
        """
        n standard normal variates by the Box-Muller transform. An odd request discards the final sine output.
        """
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        # 1 - u is in (0, 1], so the log is finite
        radius = sqrt(-2.0 * log1p(-u[0::2]))
        angle = 2.0 * pi * u[1::2]

        out = empty(2 * pairs)
        out[0::2] = radius * cos(angle)
        out[1::2] = radius * sin(angle)
        return out[:n]


def _scale(psi, noise):
    """Standard deviation for a noise parameter under the given convention."""
    return psi if noise == 'std' else sqrt(psi)


def _variance(psi, noise):
    return psi ** 2 if noise == 'std' else psi


def _check_noise(noise):
    if noise not in NOISE_CONVENTIONS:
        raise ValueError(f"noise must be one of {NOISE_CONVENTIONS}, got '{noise}'.")


@dataclass(frozen=True)
class ClusterParams:
    """
    One causal regime: y_t = N(a y_(t-1) + b x_(t-1), psi_y), x_t = N(mu_x, psi_x).
    """
    a: float
    b: float
    mu_x: float
    psi_x: float
    psi_y: float

    def __post_init__(self):
        if self.psi_x <= 0 or self.psi_y <= 0:
            raise ValueError("psi_x and psi_y must be greater than 0.")
        if abs(self.a) >= 1:
            raise ValueError("|a| must be less than 1 for a stationary regime.")

    def stationary_moments(self, noise='std'):
        """
        Mean and variance of y under this regime when it runs indefinitely.
        """
        mean = self.b * self.mu_x / (1 - self.a)
        var = (self.b ** 2 * _variance(self.psi_x, noise) + _variance(self.psi_y, noise)) / (1 - self.a ** 2)
        return mean, var


@dataclass(frozen=True)
class Exp1Params:
    """
    Parameters of a series with several consecutive causal regimes.

    Parameters
    ----------
    clusters : tuple of ClusterParams, optional
        Regimes, in the order they appear. Default is three regimes with (a, b, mu_x, psi_x, psi_y) equal to
        (-0.5, 2.5, 0.0, 2.0, 0.2), (0.5, -1.0, 1.0, 0.1, 1.3) and (-0.9, 0.2, -1.0, 1.0, 1.3).
    samples_per_cluster : {int, tuple}, optional
        Samples generated by each regime, either one count for all or one per regime. Default is 1000.
    noise : {'std', 'variance'}, optional
        Whether psi_x and psi_y are standard deviations or variances. Default is 'std'.
    """
    clusters: tuple = (
        ClusterParams(a=-0.5, b=2.5, mu_x=0.0, psi_x=2.0, psi_y=0.2),
        ClusterParams(a=0.5, b=-1.0, mu_x=1.0, psi_x=0.1, psi_y=1.3),
        ClusterParams(a=-0.9, b=0.2, mu_x=-1.0, psi_x=1.0, psi_y=1.3),
    )
    samples_per_cluster: object = 1000
    noise: str = 'std'

    def __post_init__(self):
        _check_noise(self.noise)
        if len(self.clusters) < 1:
            raise ValueError("At least 1 cluster is required.")
        counts = self.counts
        if len(counts) != len(self.clusters):
            raise ValueError("samples_per_cluster must have one entry per cluster.")
        if min(counts) < 1:
            raise ValueError("Every cluster must generate at least 1 sample.")

    @property
    def counts(self):
        if isinstance(self.samples_per_cluster, Integral):
            return (self.samples_per_cluster, ) * len(self.clusters)
        return tuple(int(c) for c in self.samples_per_cluster)

    @property
    def n_samples(self):
        return sum(self.counts)


@dataclass(frozen=True)
class Exp2Params:
    """
    Parameters of a series with one causal segment inside a non-causal series.

    The causal segment (causal_start < t < causal_stop) follows y_t = N(a y_(t-1) + b x_(t-1), psi_y), every
    other y_t is N(mu_yr, psi_yr), and x_t = N(mu_x, psi_x) throughout. The defaults use the first regime of
    :class:`Exp1Params` for the causal segment; :meth:`as_printed` gives the alternative parameter set.
    """
    a: float = -0.5
    b: float = 2.5
    mu_x: float = 0.0
    psi_x: float = 2.0
    psi_y: float = 0.2
    mu_yr: float = 0.0
    psi_yr: float = 1.3
    n_samples: int = 3000
    causal_start: int = 1300
    causal_stop: int = 1700
    noise: str = 'std'

    def __post_init__(self):
        _check_noise(self.noise)
        if self.psi_x <= 0 or self.psi_y <= 0 or self.psi_yr <= 0:
            raise ValueError("psi_x, psi_y and psi_yr must be greater than 0.")
        if abs(self.a) >= 1:
            raise ValueError("|a| must be less than 1 for a stationary regime.")
        if not 0 <= self.causal_start < self.causal_stop <= self.n_samples:
            raise ValueError("Need 0 <= causal_start < causal_stop <= n_samples.")

    @classmethod
    def as_printed(cls, **kwargs):
        params = dict(a=0.5, b=-1.0, mu_x=1.0, psi_x=0.1, psi_y=1.3, mu_yr=0.0, psi_yr=1.3)
        params.update(kwargs)
        return cls(**params)

    @property
    def n_causal(self):
        """Causal samples; the bounds are exclusive."""
        return max(self.causal_stop - self.causal_start - 1, 0)


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    """
    Cause series x, effect series y and the label of the regime that generated each sample.
    """
    x: ndarray
    y: ndarray
    truth: ndarray
    seed: int = field(default=None, compare=False)

    def __post_init__(self):
        x = asarray(self.x, dtype=float).ravel()
        y = asarray(self.y, dtype=float).ravel()
        truth = asarray(self.truth).ravel().astype(int)
        if not (x.size == y.size == truth.size):
            raise LengthMismatch(f"x ({x.size}), y ({y.size}) and truth ({truth.size}) must have equal lengths.")
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'truth', truth)

    def __len__(self):
        return self.x.size

    @property
    def n_samples(self):
        return self.x.size

    def segments(self):
        """
        Runs of constant label as (label, start, stop) tuples, stop exclusive.
        """
        if self.truth.size == 0:
            return []
        bounds = concatenate(([0], flatnonzero(diff(self.truth)) + 1, [self.truth.size]))
        return [(int(self.truth[s]), int(s), int(e)) for s, e in zip(bounds[:-1], bounds[1:])]

    def regression_dataset(self, lag=1):
        """
        The minimal construction y1 = y_t, y2 = x_(t-lag), x = y_(t-lag); see
        :meth:`~causalpatterns.base.RegressionDataset.from_series`. Labels of the samples are
        ``self.truth[dataset.times]``.
        """
        return RegressionDataset.from_series(effect=self.y, cause=self.x, lag=lag)

    def to_frame(self):
        return DataFrame({'t': arange(self.n_samples), 'x': self.x, 'y': self.y, 'truth_label': self.truth},
                         columns=['t', 'x', 'y', 'truth_label'])

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def from_csv(cls, path):
        frame = read_csv(path)
        missing = {'x', 'y', 'truth_label'} - set(frame.columns)
        if missing:
            raise ValueError(f"Columns {sorted(missing)} missing from {path}.")
        bad = frame[['x', 'y', 'truth_label']].isna().any(axis=1)
        if bad.any():
            lines = [int(i) + 2 for i in flatnonzero(bad.values)]
            raise DegenerateData(f"Missing values in {path} on line(s) {lines}.")
        return cls(frame['x'].values, frame['y'].values, frame['truth_label'].values)


def _ar1(y_prev, a, drive):
    """y_t = a y_(t-1) + drive_t, continuing from y_prev."""
    return lfilter([1.0], [1.0, -a], drive, zi=[a * y_prev])[0]


def gen_exp1(params=None, seed=0):
    """
    Series with several consecutive causal regimes.

    Parameters
    ----------
    params : {None, Exp1Params}, optional
        Generator parameters. Default is None, which uses ``Exp1Params()``.
    seed : int, optional
        Seed. Default is 0.

    Returns
    -------
    series : LabeledSeries
        Regime k (0-based) generates `counts[k]` successive samples labeled k. y_0 is drawn from the
        stationary distribution of the first regime, and y continues recursively across regime boundaries
        while x switches to the new regime's distribution.
    """
    params = Exp1Params() if params is None else params
    noise = params.noise
    counts = params.counts
    n = params.n_samples
    stream = GaussianStream(seed)

    zx = stream.normals(n)
    zy = stream.normals(n)

    x = empty(n)
    truth = empty(n, dtype=int)
    start = 0
    for k, (c, m) in enumerate(zip(params.clusters, counts)):
        x[start:start + m] = c.mu_x + _scale(c.psi_x, noise) * zx[start:start + m]
        truth[start:start + m] = k
        start += m

    y = empty(n)
    first = params.clusters[0]
    mean, var = first.stationary_moments(noise)
    y[0] = mean + sqrt(var) * zy[0]

    start = 0
    for c, m in zip(params.clusters, counts):
        lo = max(start, 1)
        hi = start + m
        if hi > lo:
            drive = c.b * x[lo - 1:hi - 1] + _scale(c.psi_y, noise) * zy[lo:hi]
            y[lo:hi] = _ar1(y[lo - 1], c.a, drive)
        start = hi

    logger.debug(f"Generated {len(counts)}-regime series of {n} samples with seed {seed}.")
    return LabeledSeries(x, y, truth, seed=seed)


def gen_exp2(params=None, seed=0):
    """
    Series with one causal segment inside a non-causal series.

    Parameters
    ----------
    params : {None, Exp2Params}, optional
        Generator parameters. Default is None, which uses ``Exp2Params()``.
    seed : int, optional
        Seed. Default is 0.

    Returns
    -------
    series : LabeledSeries
        Label 1 marks the causal samples causal_start < t < causal_stop, label 0 all others.
    """
    params = Exp2Params() if params is None else params
    noise = params.noise
    n = params.n_samples
    stream = GaussianStream(seed)

    zx = stream.normals(n)
    zy = stream.normals(n)

    x = params.mu_x + _scale(params.psi_x, noise) * zx
    y = params.mu_yr + _scale(params.psi_yr, noise) * zy
    truth = zeros(n, dtype=int)

    lo, hi = params.causal_start + 1, params.causal_stop
    if hi > lo:
        drive = params.b * x[lo - 1:hi - 1] + _scale(params.psi_y, noise) * zy[lo:hi]
        y[lo:hi] = _ar1(y[lo - 1], params.a, drive)
        truth[lo:hi] = 1

    logger.debug(f"Generated series of {n} samples with {params.n_causal} causal samples, seed {seed}.")
    return LabeledSeries(x, y, truth, seed=seed)
