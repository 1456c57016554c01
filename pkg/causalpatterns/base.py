"""
Shared data types and errors for causal pattern extraction
"""
from dataclasses import dataclass, field

from numpy import asarray, hstack, isfinite, ndarray, arange, atleast_2d


__all__ = ['CausalPatternsError', 'ConditioningError', 'DomainError', 'InsufficientSamples', 'NumericalError',
           'EmptyClusterError', 'LengthMismatch', 'TooShort', 'DegenerateData', 'RegressionDataset']


class CausalPatternsError(Exception):
    """Base class for all errors raised by causalpatterns."""


class ConditioningError(CausalPatternsError, ArithmeticError):
    """A covariance block could not be inverted, even after adding the ridge."""


class DomainError(CausalPatternsError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class InsufficientSamples(CausalPatternsError, ValueError):
    """Too few samples to estimate full-rank covariances."""


class NumericalError(CausalPatternsError, ArithmeticError):
    """NaN encountered in densities or likelihoods."""


class EmptyClusterError(CausalPatternsError, ArithmeticError):
    """
    A mixture component lost (almost) all of its responsibility mass.

    Parameters
    ----------
    component : int
        Index of the offending component.
    mass : float
        Responsibility mass of the component.
    """
    def __init__(self, component, mass):
        super().__init__(f"Component {component} has responsibility mass {mass:.3g}, below the mass floor.")
        self.component = component
        self.mass = mass

    def __reduce__(self):
        return EmptyClusterError, (self.component, self.mass)


class LengthMismatch(CausalPatternsError, ValueError):
    """Two sequences that must be aligned have different lengths."""


class TooShort(CausalPatternsError, ValueError):
    """A series is too short for the requested operation."""


class DegenerateData(CausalPatternsError, ValueError):
    """Input has zero variance or missing values."""


def _as_block(values, name):
    block = asarray(values, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    elif block.ndim != 2:
        raise ValueError(f"{name} must be a 1D or 2D array.")
    return block


@dataclass(frozen=True)
class RegressionDataset:
    """
    Aligned regression blocks for partial canonical correlation and the mixture model.

    Parameters
    ----------
    x : numpy.ndarray
        (N, dx) conditioning block, the past of the effect series. dx may be 0.
    y1 : numpy.ndarray
        (N, d1) first target block, the present of the effect series.
    y2 : numpy.ndarray
        (N, d2) second target block, the past of the cause series.
    times : {None, numpy.ndarray}, optional
        (N, ) time index of every row in the series the blocks were built from.
    """
    x: ndarray
    y1: ndarray
    y2: ndarray
    times: ndarray = field(default=None)

    def __post_init__(self):
        y1 = _as_block(self.y1, 'y1')
        n = y1.shape[0]
        x = asarray(self.x, dtype=float)
        if x.size == 0:
            x = x.reshape((n, 0))
        x = _as_block(x, 'x')
        y2 = _as_block(self.y2, 'y2')

        if n < 1:
            raise InsufficientSamples("A regression dataset needs at least 1 sample.")
        if not (x.shape[0] == y2.shape[0] == n):
            raise LengthMismatch(f"Blocks have different numbers of rows: x={x.shape[0]}, y1={n}, "
                                 f"y2={y2.shape[0]}.")
        for name, block in (('x', x), ('y1', y1), ('y2', y2)):
            if not isfinite(block).all():
                raise DegenerateData(f"Block {name} contains non-finite values.")

        times = arange(n) if self.times is None else asarray(self.times)
        if times.shape != (n, ):
            raise LengthMismatch("times must have one entry per sample.")

        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y1', y1)
        object.__setattr__(self, 'y2', y2)
        object.__setattr__(self, 'times', times)

    def __repr__(self):
        return f'RegressionDataset(N={self.n_samples}, dx={self.dx}, d1={self.d1}, d2={self.d2})'

    @property
    def y(self):
        """(N, d1 + d2) stacked targets."""
        return hstack((self.y1, self.y2))

    @property
    def n_samples(self):
        return self.y1.shape[0]

    @property
    def dx(self):
        return self.x.shape[1]

    @property
    def d1(self):
        return self.y1.shape[1]

    @property
    def d2(self):
        return self.y2.shape[1]

    def subset(self, index):
        """
        Rows selected by a boolean mask or an integer index array.

        Returns
        -------
        subset : RegressionDataset
        """
        index = asarray(index)
        return RegressionDataset(self.x[index], self.y1[index], self.y2[index], times=self.times[index])

    @classmethod
    def from_series(cls, effect, cause, lag=1):
        """
        Build the minimal lagged construction {y_t, x_(t-lag), y_(t-lag)} from two aligned series.

        Parameters
        ----------
        effect : array_like
            (T, ) or (T, d_e) effect series (y).
        cause : array_like
            (T, ) or (T, d_c) cause series (x).
        lag : int, optional
            Lag of the past blocks. Default is 1.

        Returns
        -------
        dataset : RegressionDataset
            y1 = effect(t), y2 = cause(t - lag), x = effect(t - lag), for t = lag, ..., T - 1.
        """
        effect = atleast_2d(asarray(effect, dtype=float).T).T
        cause = atleast_2d(asarray(cause, dtype=float).T).T
        if effect.shape[0] != cause.shape[0]:
            raise LengthMismatch("effect and cause series must have the same length.")
        if lag < 1:
            raise ValueError("lag must be greater than 0.")
        if effect.shape[0] <= lag:
            raise TooShort(f"Series of length {effect.shape[0]} is too short for lag {lag}.")

        return cls(x=effect[:-lag], y1=effect[lag:], y2=cause[:-lag], times=arange(lag, effect.shape[0]))
