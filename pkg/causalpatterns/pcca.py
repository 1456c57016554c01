"""
Partial canonical correlation analysis and the Granger causality index derived from it.

The Granger causality (GC) from a cause series to an effect series is measured by the largest partial
canonical correlation between the effect's present (block 1) and the cause's past (block 2), after the
effect's own past (the conditioning block x) has been regressed out of both.
"""
from dataclasses import dataclass, field

from numpy import asarray, atleast_2d, zeros, eye, trace, sqrt, clip, argsort, sum as npsum, log, log1p, \
    ndarray, isfinite, allclose, abs as npabs, linalg as nplinalg
from scipy.linalg import cholesky, solve, solve_triangular, eigh, LinAlgError

from causalpatterns.base import ConditioningError, DomainError, InsufficientSamples


__all__ = ['CovarianceBundle', 'PccaSolution', 'GrangerEstimate', 'partial_covariance', 'solve_pcca',
           'granger_index', 'granger_from_blocks', 'granger_trace_index', 'default_ridge']

RCOND_MIN = 1e-14
EIG_CLAMP = 1e-12


def default_ridge(matrix):
    """
    Default ridge for inverting a covariance matrix: 1e-8 times its mean diagonal entry.
    """
    matrix = atleast_2d(matrix)
    if matrix.size == 0:
        return 0.0
    return 1e-8 * trace(matrix) / matrix.shape[0]


def _regularize(matrix, ridge):
    if ridge is None:
        ridge = default_ridge(matrix)
    if ridge < 0:
        raise ValueError("ridge must be greater than or equal to 0.")
    return matrix + ridge * eye(matrix.shape[0])


def _check_conditioning(matrix, name):
    # reciprocal condition number in the 2-norm
    if 1.0 / nplinalg.cond(matrix) < RCOND_MIN:
        raise ConditioningError(f"{name} is numerically singular (reciprocal condition number < {RCOND_MIN}).")


def _cholesky(matrix, name):
    _check_conditioning(matrix, name)
    try:
        return cholesky(matrix, lower=True)
    except LinAlgError as e:
        raise ConditioningError(f"{name} is not positive definite.") from e


@dataclass(frozen=True)
class CovarianceBundle:
    """
    Covariance blocks of the two targets and the conditioning block.

    Parameters
    ----------
    sigma_11 : numpy.ndarray
        (d1, d1) covariance of block 1.
    sigma_22 : numpy.ndarray
        (d2, d2) covariance of block 2.
    sigma_12 : numpy.ndarray
        (d1, d2) cross-covariance of blocks 1 and 2.
    sigma_1x : numpy.ndarray
        (d1, dx) cross-covariance of block 1 and the conditioning block.
    sigma_2x : numpy.ndarray
        (d2, dx) cross-covariance of block 2 and the conditioning block.
    sigma_xx : numpy.ndarray
        (dx, dx) covariance of the conditioning block. dx may be 0.
    n_samples : int
        Number of samples the estimates were formed from. Must be at least 2.
    """
    sigma_11: ndarray
    sigma_22: ndarray
    sigma_12: ndarray
    sigma_1x: ndarray
    sigma_2x: ndarray
    sigma_xx: ndarray
    n_samples: int

    def __post_init__(self):
        s11 = atleast_2d(asarray(self.sigma_11, dtype=float))
        s22 = atleast_2d(asarray(self.sigma_22, dtype=float))
        d1, d2 = s11.shape[0], s22.shape[0]
        s12 = asarray(self.sigma_12, dtype=float).reshape((d1, d2))
        sxx = asarray(self.sigma_xx, dtype=float)
        dx = int(round(sxx.size ** 0.5))
        sxx = sxx.reshape((dx, dx))
        s1x = asarray(self.sigma_1x, dtype=float).reshape((d1, dx))
        s2x = asarray(self.sigma_2x, dtype=float).reshape((d2, dx))

        for name, mat in (('sigma_11', s11), ('sigma_22', s22), ('sigma_xx', sxx)):
            if mat.size == 0:
                continue
            scale = npabs(mat).max()
            if not allclose(mat, mat.T, rtol=0, atol=1e-10 * max(scale, 1e-300)):
                raise ValueError(f"{name} must be symmetric.")
            evals = nplinalg.eigvalsh(mat)
            if evals.min() < -1e-8 * max(evals.max(), 0.0):
                raise ValueError(f"{name} must be positive semidefinite.")
        if self.n_samples < 2:
            raise InsufficientSamples("n_samples must be at least 2.")

        object.__setattr__(self, 'sigma_11', s11)
        object.__setattr__(self, 'sigma_22', s22)
        object.__setattr__(self, 'sigma_12', s12)
        object.__setattr__(self, 'sigma_1x', s1x)
        object.__setattr__(self, 'sigma_2x', s2x)
        object.__setattr__(self, 'sigma_xx', sxx)

    @classmethod
    def from_blocks(cls, y1, y2, x):
        """
        Sample covariances (denominator N) of mean-centered blocks.

        Parameters
        ----------
        y1 : numpy.ndarray
            (N, d1) block 1.
        y2 : numpy.ndarray
            (N, d2) block 2.
        x : numpy.ndarray
            (N, dx) conditioning block.

        Returns
        -------
        bundle : CovarianceBundle
        """
        n = y1.shape[0]
        c1 = y1 - y1.mean(axis=0)
        c2 = y2 - y2.mean(axis=0)
        cx = x - x.mean(axis=0) if x.shape[1] > 0 else x

        s11 = c1.T @ c1 / n
        s22 = c2.T @ c2 / n
        sxx = cx.T @ cx / n
        return cls(
            sigma_11=(s11 + s11.T) / 2,
            sigma_22=(s22 + s22.T) / 2,
            sigma_12=c1.T @ c2 / n,
            sigma_1x=c1.T @ cx / n,
            sigma_2x=c2.T @ cx / n,
            sigma_xx=(sxx + sxx.T) / 2,
            n_samples=n
        )

    @property
    def dims(self):
        """(d1, d2, dx)"""
        return self.sigma_11.shape[0], self.sigma_22.shape[0], self.sigma_xx.shape[0]


@dataclass(frozen=True)
class PccaSolution:
    """
    Partial canonical correlations and directions.

    Parameters
    ----------
    rho : numpy.ndarray
        (r, ) canonical correlations in [0, 1], sorted descending. r = min(d1, d2).
    directions_1 : numpy.ndarray
        (d1, r) canonical directions of block 1, normalized so that u' Sigma_11|x u = 1.
    directions_2 : numpy.ndarray
        (d2, r) canonical directions of block 2, normalized so that u' Sigma_22|x u = 1.
    """
    rho: ndarray
    directions_1: ndarray
    directions_2: ndarray

    @property
    def rho1(self):
        return float(self.rho[0]) if self.rho.size > 0 else 0.0


@dataclass(frozen=True)
class GrangerEstimate:
    """
    Granger causality estimate for one set of regression blocks.

    Parameters
    ----------
    rho : numpy.ndarray
        Partial canonical correlations, descending.
    gc_index : float
        Granger causality index in bits.
    n_samples : int
        Number of samples used.
    """
    rho: ndarray = field(repr=False)
    gc_index: float
    n_samples: int

    @property
    def rho1(self):
        return float(self.rho[0]) if self.rho.size > 0 else 0.0


def partial_covariance(sigma_ab, sigma_ac, sigma_cc, sigma_cb, ridge=0.0):
    """
    Partial covariance of blocks a and b given block c.

    Parameters
    ----------
    sigma_ab : array_like
        (da, db) covariance of a and b.
    sigma_ac : array_like
        (da, dc) covariance of a and c.
    sigma_cc : array_like
        (dc, dc) covariance of c. dc may be 0, in which case `sigma_ab` is returned unchanged.
    sigma_cb : array_like
        (dc, db) covariance of c and b.
    ridge : {float, None}, optional
        Non-negative value added to the diagonal of `sigma_cc` before inversion. Default is 0. None uses
        :func:`default_ridge`.

    Returns
    -------
    sigma_ab_c : numpy.ndarray
        (da, db) array Sigma_ab - Sigma_ac (Sigma_cc + ridge I)^-1 Sigma_cb.

    Raises
    ------
    ConditioningError
        If the regularized `sigma_cc` is numerically singular.
    """
    sigma_ab = atleast_2d(asarray(sigma_ab, dtype=float))
    sigma_cc = asarray(sigma_cc, dtype=float)
    if sigma_cc.size == 0:
        return sigma_ab.copy()
    sigma_cc = atleast_2d(sigma_cc)
    dc = sigma_cc.shape[0]
    sigma_ac = asarray(sigma_ac, dtype=float).reshape((sigma_ab.shape[0], dc))
    sigma_cb = asarray(sigma_cb, dtype=float).reshape((dc, sigma_ab.shape[1]))

    reg = _regularize(sigma_cc, ridge)
    _check_conditioning(reg, 'Conditioning covariance')
    return sigma_ab - sigma_ac @ solve(reg, sigma_cb, assume_a='sym')


def _whitened_eig(cross, sigma_self, sigma_other, ridge, name):
    """
    Solve (cross' sigma_other^-1 cross - rho^2 sigma_self) u = 0 by whitening sigma_self.

    Returns eigenvalues (descending, clamped) and directions normalized to u' sigma_self u = 1.
    """
    l_other = _cholesky(_regularize(sigma_other, ridge), f'{name} (inverted block)')
    l_self = _cholesky(_regularize(sigma_self, ridge), f'{name} (whitened block)')

    # M = cross' sigma_other^-1 cross = B' B with B = L_other^-1 cross
    b = solve_triangular(l_other, cross, lower=True)
    # whitened M: L_self^-1 M L_self^-T = (B L_self^-T)' (B L_self^-T)
    c = solve_triangular(l_self, b.T, lower=True).T
    sym = c.T @ c
    evals, evecs = eigh((sym + sym.T) / 2)

    order = argsort(evals)[::-1]
    evals = clip(evals[order], 0.0, 1.0 - EIG_CLAMP)
    directions = solve_triangular(l_self.T, evecs[:, order], lower=False)
    return evals, directions


def solve_pcca(bundle, ridge=None):
    """
    Partial canonical correlation analysis of blocks 1 and 2 given the conditioning block.

    Parameters
    ----------
    bundle : CovarianceBundle
        Covariance estimates.
    ridge : {None, float}, optional
        Ridge added before every covariance inversion. Default is None, which uses :func:`default_ridge`
        for each matrix.

    Returns
    -------
    solution : PccaSolution

    Raises
    ------
    ConditioningError
        If a partial covariance block cannot be inverted after adding the ridge.

    Notes
    -----
    Solves the generalized eigenvalue problems

        (S12' S11^-1 S12 - rho^2 S22) u2 = 0
        (S21' S22^-1 S21 - rho^2 S11) u1 = 0

    with Sab = Sigma_ab|x, by Cholesky whitening and a symmetric eigendecomposition.
    """
    s11 = partial_covariance(bundle.sigma_11, bundle.sigma_1x, bundle.sigma_xx, bundle.sigma_1x.T, ridge)
    s22 = partial_covariance(bundle.sigma_22, bundle.sigma_2x, bundle.sigma_xx, bundle.sigma_2x.T, ridge)
    s12 = partial_covariance(bundle.sigma_12, bundle.sigma_1x, bundle.sigma_xx, bundle.sigma_2x.T, ridge)
    s11 = (s11 + s11.T) / 2
    s22 = (s22 + s22.T) / 2

    r = min(s11.shape[0], s22.shape[0])
    ev2, u2 = _whitened_eig(s12, s22, s11, ridge, 'Sigma_22|x')
    ev1, u1 = _whitened_eig(s12.T, s11, s22, ridge, 'Sigma_11|x')

    u1, u2 = u1[:, :r], u2[:, :r]
    # align signs so that each canonical pair is positively correlated
    signs = npsum(u1 * (s12 @ u2), axis=0) < 0
    u1[:, signs] *= -1

    return PccaSolution(rho=sqrt(ev2[:r]), directions_1=u1, directions_2=u2)


def granger_index(rho1):
    """
    Granger causality index from the largest partial canonical correlation.

    Parameters
    ----------
    rho1 : float
        Largest partial canonical correlation, in [0, 1).

    Returns
    -------
    gc : float
        0.5 * log2(1 / (1 - rho1^2)), in bits.

    Raises
    ------
    DomainError
        If `rho1` is 1 or larger (perfect predictability), or negative.
    """
    rho1 = float(rho1)
    if not isfinite(rho1):
        raise DomainError("rho1 must be finite.")
    if rho1 < -EIG_CLAMP:
        raise DomainError("rho1 must be greater than or equal to 0.")
    if rho1 >= 1.0:
        raise DomainError("rho1 >= 1 means perfect predictability; the Granger causality index is infinite.")
    rho1 = max(rho1, 0.0)
    return -0.5 * log1p(-rho1 ** 2) / log(2.0)


def _check_samples(dataset):
    n = dataset.n_samples
    if n <= dataset.dx + dataset.d1 + dataset.d2:
        raise InsufficientSamples(f"{n} samples are not enough for blocks of total dimension "
                                  f"{dataset.dx + dataset.d1 + dataset.d2}.")


def granger_from_blocks(dataset, ridge=None):
    """
    Granger causality of the cause-past block (y2) on the effect-present block (y1), conditioned on the
    effect-past block (x).

    Parameters
    ----------
    dataset : RegressionDataset
        Regression blocks.
    ridge : {None, float}, optional
        Ridge for covariance inversions. Default is None, see :func:`solve_pcca`.

    Returns
    -------
    estimate : GrangerEstimate

    Raises
    ------
    InsufficientSamples
        If N <= dx + d1 + d2.
    """
    _check_samples(dataset)
    bundle = CovarianceBundle.from_blocks(dataset.y1, dataset.y2, dataset.x)
    solution = solve_pcca(bundle, ridge=ridge)
    return GrangerEstimate(rho=solution.rho, gc_index=granger_index(solution.rho1), n_samples=dataset.n_samples)


def granger_trace_index(dataset, ridge=None):
    """
    Trace-based Granger causality, ln(tr(Sigma_11|x) / tr(Sigma_11|x,2)), in nats.

    Parameters
    ----------
    dataset : RegressionDataset
        Regression blocks.
    ridge : {None, float}, optional
        Ridge for covariance inversions.

    Returns
    -------
    gc : float
        Index in nats. For a scalar effect block it equals 2 ln(2) times :func:`granger_index`.
    """
    _check_samples(dataset)
    bundle = CovarianceBundle.from_blocks(dataset.y1, dataset.y2, dataset.x)
    d1, d2, dx = bundle.dims

    # residual covariance of y1 given x alone
    restricted = partial_covariance(bundle.sigma_11, bundle.sigma_1x, bundle.sigma_xx, bundle.sigma_1x.T, ridge)

    # residual covariance of y1 given (x, y2)
    joint = zeros((dx + d2, dx + d2))
    joint[:dx, :dx] = bundle.sigma_xx
    joint[:dx, dx:] = bundle.sigma_2x.T
    joint[dx:, :dx] = bundle.sigma_2x
    joint[dx:, dx:] = bundle.sigma_22
    cross = zeros((d1, dx + d2))
    cross[:, :dx] = bundle.sigma_1x
    cross[:, dx:] = bundle.sigma_12
    full = partial_covariance(bundle.sigma_11, cross, joint, cross.T, ridge)

    return float(log(trace(restricted) / trace(full)))
