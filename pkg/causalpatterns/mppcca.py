"""
Mixture of probabilistic partial canonical correlation analyses (MPPCCA), fit by a ridge-regularized EM
algorithm.

Each component k models the stacked targets y = (y1, y2) given the conditioning block x as

    y | x, k ~ N(W_xk x + mu_k, Psi_k + W_tk W_tk' + eta_C I)

where W_tk is the loading of a shared dt-dimensional latent factor.
"""
from dataclasses import dataclass, field
from multiprocessing import Pool
import json
import logging
from warnings import warn

from numpy import asarray, atleast_2d, zeros, eye, diag, log, pi as PI, exp, sum as npsum, isnan, \
    hstack, argmax, argsort, maximum, sqrt, ceil, ndarray, allclose, isclose, abs as npabs, errstate, arange, \
    linalg as nplinalg, minimum, flatnonzero
from numpy.random import SeedSequence, default_rng
from scipy.linalg import cholesky, solve, solve_triangular, eigh, LinAlgError
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from causalpatterns.base import RegressionDataset, NumericalError, EmptyClusterError, ConditioningError, \
    InsufficientSamples
from causalpatterns.clustering import kmeans, hard_assign


__all__ = ['RegressionDataset', 'ComponentParams', 'MppccaModel', 'Responsibilities', 'FitTrace', 'FitConfig',
           'component_covariance', 'log_likelihood', 'e_step', 'm_step', 'relation_groups', 'fit']

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
MONOTONE_RTOL = 1e-8


def _as_loading(values, rows):
    loading = asarray(values, dtype=float)
    if loading.size == 0:
        return zeros((rows, 0))
    return loading.reshape((rows, -1))


@dataclass(frozen=True)
class ComponentParams:
    """
    Parameters of one mixture component.

    Parameters
    ----------
    pi : float
        Mixing weight in [0, 1].
    mu : numpy.ndarray
        (D, ) mean offset, D = d1 + d2.
    w_x : numpy.ndarray
        (D, dx) regression loading on the conditioning block.
    w_t : numpy.ndarray
        (D, dt) latent factor loading.
    psi : numpy.ndarray
        (D, D) noise covariance, symmetric positive semidefinite.
    """
    pi: float
    mu: ndarray
    w_x: ndarray
    w_t: ndarray
    psi: ndarray

    def __post_init__(self):
        mu = asarray(self.mu, dtype=float).ravel()
        dim = mu.size
        w_x = _as_loading(self.w_x, dim)
        w_t = _as_loading(self.w_t, dim)
        psi = atleast_2d(asarray(self.psi, dtype=float))

        if not 0.0 <= self.pi <= 1.0:
            raise ValueError("pi must be in [0, 1].")
        if psi.shape != (dim, dim):
            raise ValueError(f"psi must have shape ({dim}, {dim}), got {psi.shape}.")
        if not allclose(psi, psi.T, rtol=0, atol=1e-10 * max(npabs(psi).max(), 1e-300)):
            raise ValueError("psi must be symmetric.")
        evals = nplinalg.eigvalsh(psi)
        if evals.min() < -1e-8 * max(evals.max(), 0.0):
            raise ValueError("psi must be positive semidefinite.")

        object.__setattr__(self, 'pi', float(self.pi))
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'w_x', w_x)
        object.__setattr__(self, 'w_t', w_t)
        object.__setattr__(self, 'psi', psi)

    @property
    def dim(self):
        return self.mu.size

    @property
    def dx(self):
        return self.w_x.shape[1]

    @property
    def dt(self):
        return self.w_t.shape[1]

    def to_dict(self):
        # tolist keeps full double precision through json's repr
        return {
            'pi': self.pi,
            'mu': self.mu.tolist(),
            'w_x': self.w_x.ravel().tolist(),
            'w_t': self.w_t.ravel().tolist(),
            'psi': self.psi.ravel().tolist()
        }

    @classmethod
    def from_dict(cls, values, dim, dx, dt):
        return cls(
            pi=values['pi'],
            mu=asarray(values['mu'], dtype=float),
            w_x=asarray(values['w_x'], dtype=float).reshape((dim, dx)),
            w_t=asarray(values['w_t'], dtype=float).reshape((dim, dt)),
            psi=asarray(values['psi'], dtype=float).reshape((dim, dim))
        )


@dataclass(frozen=True)
class MppccaModel:
    """
    Fitted (or user-specified) MPPCCA model.

    Parameters
    ----------
    components : tuple of ComponentParams
        The K mixture components. All must share the same shapes.
    dt : int
        Latent dimension.
    eta_c : float, optional
        Ridge added to every component covariance. Default is 1e-6.
    eta_wx : float, optional
        Ridge used when solving for the regression loadings. Default is 1e-6.
    d1 : {None, int}, optional
        Dimension of the first target block, so that stacked vectors can be split. None if unknown.
    """
    components: tuple
    dt: int
    eta_c: float = 1e-6
    eta_wx: float = 1e-6
    d1: int = None

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ValueError("A model needs at least 1 component.")
        shapes = {(c.dim, c.dx, c.dt) for c in comps}
        if len(shapes) != 1:
            raise ValueError("All components must have identical shapes.")
        if comps[0].dt != self.dt:
            raise ValueError(f"Component latent loadings have {comps[0].dt} columns, expected dt={self.dt}.")
        total = sum(c.pi for c in comps)
        if not isclose(total, 1.0, rtol=0, atol=1e-10):
            raise ValueError(f"Mixing weights must sum to 1 (sum is {total!r}).")
        if self.eta_c < 0 or self.eta_wx < 0:
            raise ValueError("eta_c and eta_wx must be greater than or equal to 0.")
        if self.d1 is not None and not 0 <= self.d1 <= comps[0].dim:
            raise ValueError("d1 must be between 0 and the stacked target dimension.")
        object.__setattr__(self, 'components', comps)

    def __repr__(self):
        return f'MppccaModel(K={self.k}, D={self.dim}, dx={self.dx}, dt={self.dt})'

    @property
    def k(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def dx(self):
        return self.components[0].dx

    @property
    def d2(self):
        return None if self.d1 is None else self.dim - self.d1

    @property
    def weights(self):
        return asarray([c.pi for c in self.components])

    def permute(self, order):
        """
        Relabel components: component i of the result is component `order[i]` of this model.
        """
        order = [int(i) for i in order]
        if sorted(order) != list(range(self.k)):
            raise ValueError("order must be a permutation of the component indices.")
        return MppccaModel(tuple(self.components[i] for i in order), self.dt, eta_c=self.eta_c,
                           eta_wx=self.eta_wx, d1=self.d1)

    def predict(self, data):
        """
        Hard cluster labels of the samples in `data`.

        Returns
        -------
        assignment : ClusterAssignment
        """
        return hard_assign(e_step(self, data))

    def to_dict(self):
        return {
            'version': MODEL_VERSION,
            'K': self.k,
            'dt': self.dt,
            'eta_c': self.eta_c,
            'eta_wx': self.eta_wx,
            'd1': self.d1 if self.d1 is not None else self.dim,
            'd2': self.d2 if self.d1 is not None else 0,
            'dx': self.dx,
            'components': [c.to_dict() for c in self.components]
        }

    def to_json(self, indent=None):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc):
        if doc.get('version') != MODEL_VERSION:
            raise ValueError(f"Unsupported model document version {doc.get('version')!r}.")
        dim = doc['d1'] + doc['d2']
        comps = tuple(ComponentParams.from_dict(c, dim, doc['dx'], doc['dt']) for c in doc['components'])
        if len(comps) != doc['K']:
            raise ValueError(f"Model document declares K={doc['K']} but holds {len(comps)} components.")
        return cls(comps, doc['dt'], eta_c=doc['eta_c'], eta_wx=doc['eta_wx'], d1=doc['d1'])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, 'w') as f:
            f.write(self.to_json(indent=1))

    @classmethod
    def load(cls, path):
        with open(path, 'r') as f:
            return cls.from_json(f.read())


@dataclass(frozen=True)
class Responsibilities:
    """
    Posterior component probabilities.

    Parameters
    ----------
    r : numpy.ndarray
        (N, K) row-stochastic matrix.
    """
    r: ndarray

    def __post_init__(self):
        r = atleast_2d(asarray(self.r, dtype=float))
        if r.ndim != 2:
            raise ValueError("r must be a 2D array.")
        if (r < 0).any() or (r > 1).any():
            raise ValueError("Responsibilities must be in [0, 1].")
        if not allclose(r.sum(axis=1), 1.0, rtol=0, atol=1e-10):
            raise ValueError("Every row of the responsibilities must sum to 1.")
        object.__setattr__(self, 'r', r)

    @property
    def n_samples(self):
        return self.r.shape[0]

    @property
    def k(self):
        return self.r.shape[1]

    @property
    def mass(self):
        """(K, ) responsibility mass per component."""
        return self.r.sum(axis=0)

    @property
    def labels(self):
        return argmax(self.r, axis=1)

    @classmethod
    def one_hot(cls, labels, k):
        labels = asarray(labels, dtype=int)
        r = zeros((labels.size, k))
        r[arange(labels.size), labels] = 1.0
        return cls(r)


@dataclass(frozen=True)
class FitTrace:
    """
    Record of one EM run.

    Parameters
    ----------
    log_likelihood_per_iter : list
        Log-likelihood after every E-step.
    n_iters : int
        Number of E-steps performed.
    converged : bool
        Whether the relative change in log-likelihood fell below the tolerance.
    seed : int
        Seed the fit was started from.
    restart : int
        Index of the restart that produced this trace.
    monotonicity_violations : int
        Number of steps where the log-likelihood decreased by more than 1e-8 relative.
    assignments_per_iter : {None, list}
        Hard labels after every E-step, if tracking was requested.
    regrouped_at : {None, int}
        E-steps run before duplicate components were regrouped, or None if no regrouping took place. The
        log-likelihood is only expected to be non-decreasing within the runs on either side of this index.
    """
    log_likelihood_per_iter: list
    n_iters: int
    converged: bool
    seed: int
    restart: int = 0
    monotonicity_violations: int = 0
    assignments_per_iter: list = field(default=None, repr=False)
    regrouped_at: int = None

    @property
    def final_log_likelihood(self):
        return self.log_likelihood_per_iter[-1]

    def to_frame(self):
        """
        pandas.DataFrame with columns `iteration` (1-based) and `log_likelihood`.
        """
        from pandas import DataFrame

        return DataFrame({
            'iteration': arange(1, self.n_iters + 1),
            'log_likelihood': asarray(self.log_likelihood_per_iter, dtype=float)
        })


@dataclass(frozen=True)
class FitConfig:
    """
    Options for :func:`fit`.

    Parameters
    ----------
    eta_c : float, optional
        Ridge added to component covariances. Default is 1e-6.
    eta_wx : float, optional
        Ridge for the regression loading solve. Default is 1e-6.
    tol : float, optional
        Relative log-likelihood change for convergence. Default is 1e-6.
    max_iters : int, optional
        Maximum number of E-steps per restart. Default is 200.
    restarts : int, optional
        Number of independent restarts. Default is 10.
    seed : int, optional
        Seed from which all restart seeds are derived. Default is 0.
    enforce_block_diagonal : bool, optional
        Zero the cross blocks of Psi between y1 and y2 after every M-step. Default is False.
    mass_floor : {None, float}, optional
        Minimum responsibility mass of a component. Default is None, which uses max(dt + 1, 2).
    reinit_retries : int, optional
        Component re-initializations allowed per restart. Default is 3.
    n_jobs : int, optional
        Worker processes for the restarts. Default is 1.
    track_assignments : bool, optional
        Keep hard labels after every E-step. Default is False.
    regroup : bool, optional
        After EM, merge components that describe the same relation and re-split the heaviest component, then
        run EM again. Default is True.
    duplicate_tol : float, optional
        Mean squared difference between two components' y1 predictions, in units of their residual variance,
        below which they describe the same relation. Default is 1.0.
    """
    eta_c: float = 1e-6
    eta_wx: float = 1e-6
    tol: float = 1e-6
    max_iters: int = 200
    restarts: int = 10
    seed: int = 0
    enforce_block_diagonal: bool = False
    mass_floor: float = None
    reinit_retries: int = 3
    n_jobs: int = 1
    track_assignments: bool = False
    regroup: bool = True
    duplicate_tol: float = 1.0

    def __post_init__(self):
        for name in ('eta_c', 'eta_wx', 'tol', 'reinit_retries', 'duplicate_tol'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be greater than or equal to 0.")
        for name in ('max_iters', 'restarts', 'n_jobs'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be greater than 0.")
        if self.mass_floor is not None and self.mass_floor <= 0:
            raise ValueError("mass_floor must be greater than 0.")

    def resolved_mass_floor(self, dt):
        return max(dt + 1, 2) if self.mass_floor is None else self.mass_floor


def component_covariance(c, eta_c):
    """
    Marginal covariance of a component, C = Psi + W_t W_t' + eta_c I.

    Parameters
    ----------
    c : ComponentParams
    eta_c : float
        Non-negative ridge.

    Returns
    -------
    cov : numpy.ndarray
        (D, D) symmetric covariance.
    """
    cov = c.psi + c.w_t @ c.w_t.T + eta_c * eye(c.dim)
    return (cov + cov.T) / 2


def _check_shapes(model, data):
    if data.d1 + data.d2 != model.dim or data.dx != model.dx:
        raise ValueError(f"Data blocks (dx={data.dx}, d1+d2={data.d1 + data.d2}) do not match the model "
                         f"(dx={model.dx}, D={model.dim}).")


def _log_joint(model, data):
    """
    (N, K) array of ln pi_k + ln N(y_n | W_xk x_n + mu_k, C_k).
    """
    _check_shapes(model, data)
    y, x = data.y, data.x
    n, dim = y.shape
    out = zeros((n, model.k))

    for j, c in enumerate(model.components):
        try:
            chol = cholesky(component_covariance(c, model.eta_c), lower=True)
        except LinAlgError as e:
            raise NumericalError(f"Covariance of component {j} is not positive definite.") from e
        resid = y - x @ c.w_x.T - c.mu
        z = solve_triangular(chol, resid.T, lower=True)
        logdet = 2.0 * npsum(log(diag(chol)))
        with errstate(divide='ignore'):
            log_pi = log(c.pi)
        out[:, j] = log_pi - 0.5 * (dim * log(2 * PI) + logdet + npsum(z ** 2, axis=0))

    if isnan(out).any():
        raise NumericalError("NaN encountered in component log-densities.")
    return out


def _expectation(model, data):
    log_joint = _log_joint(model, data)
    log_norm = logsumexp(log_joint, axis=1, keepdims=True)
    if isnan(log_norm).any() or (log_norm == -float('inf')).any():
        raise NumericalError("A sample has zero probability under every component.")

    r = exp(log_joint - log_norm)
    r /= r.sum(axis=1, keepdims=True)
    return Responsibilities(r), float(log_norm.sum())


def log_likelihood(model, data):
    """
    Mixture log-likelihood sum_n ln sum_k pi_k N(y_n | W_xk x_n + mu_k, C_k).

    Parameters
    ----------
    model : MppccaModel
    data : RegressionDataset

    Returns
    -------
    ll : float

    Raises
    ------
    NumericalError
        If any per-sample log-density is NaN.
    """
    ll = float(logsumexp(_log_joint(model, data), axis=1).sum())
    if isnan(ll):
        raise NumericalError("NaN log-likelihood.")
    return ll


def e_step(model, data):
    """
    Posterior component probabilities of every sample, computed in log space.

    Parameters
    ----------
    model : MppccaModel
    data : RegressionDataset

    Returns
    -------
    resp : Responsibilities
    """
    return _expectation(model, data)[0]


def _latent_loading(scatter, dt, psi_prev):
    """
    W_t = U (Lambda - D)^(1/2) with U, Lambda the top dt eigenpairs of the scatter and
    D = diag(U' Psi_prev U) (0 without a previous Psi).
    """
    evals, evecs = eigh(scatter)
    order = argsort(evals)[::-1][:dt]
    u, lam = evecs[:, order], evals[order]
    d = zeros(dt) if psi_prev is None else diag(u.T @ psi_prev @ u)
    return u * sqrt(maximum(lam - d, 0.0))


def _floor_psi(psi, floor):
    evals, evecs = eigh(psi)
    if evals.min() >= floor:
        return psi
    psi = (evecs * maximum(evals, floor)) @ evecs.T
    return (psi + psi.T) / 2


def m_step(data, resp, prev=None, *, dt=None, eta_c=1e-6, eta_wx=1e-6, enforce_block_diagonal=False,
           mass_floor=None):
    """
    Maximization step: update every component from the responsibilities.

    Parameters
    ----------
    data : RegressionDataset
    resp : Responsibilities
        (N, K) responsibilities.
    prev : {None, MppccaModel}, optional
        Model of the previous iteration. Its latent dimension and ridge constants are reused, and its Psi
        enters the latent loading update. None for the initial step, in which case `dt`, `eta_c` and
        `eta_wx` are taken from the keyword arguments.
    dt : {None, int}, optional
        Latent dimension, required when `prev` is None.
    eta_c, eta_wx : float, optional
        Ridge constants used when `prev` is None. Default is 1e-6.
    enforce_block_diagonal : bool, optional
        Zero the y1/y2 cross blocks of Psi. Default is False.
    mass_floor : {None, float}, optional
        Minimum responsibility mass per component. Default is None, which uses max(dt + 1, 2).

    Returns
    -------
    model : MppccaModel

    Raises
    ------
    EmptyClusterError
        If a component's responsibility mass is below the mass floor.

    Notes
    -----
    Per component k, with weights r_nk:

    1. W_xk from the weighted, centered normal equations with ridge eta_wx,
    2. mu_k = ybar_k - W_xk xbar_k,
    3. S_k the weighted residual covariance,
    4. W_tk = U_k (Lambda_k - D_k)^(1/2) with D_k = diag(U_k' Psi_k^prev U_k),
    5. Psi_k = S_k - W_tk W_tk', symmetrized and floored at max(1e-6 tr(S_k) / D, 1e-12).
    """
    if prev is not None:
        dt, eta_c, eta_wx = prev.dt, prev.eta_c, prev.eta_wx
    if dt is None:
        raise ValueError("dt is required when there is no previous model.")
    if dt < 0 or dt > min(data.d1, data.d2):
        raise ValueError(f"dt must be between 0 and min(d1, d2) = {min(data.d1, data.d2)}.")
    if resp.n_samples != data.n_samples:
        raise ValueError("Responsibilities and data have different numbers of samples.")
    floor = max(dt + 1, 2) if mass_floor is None else mass_floor

    x, y = data.x, data.y
    dim = y.shape[1]
    dx = x.shape[1]
    mass = resp.mass
    for j in range(resp.k):
        if mass[j] < floor:
            raise EmptyClusterError(j, mass[j])
    weights = mass / mass.sum()

    comps = []
    for j in range(resp.k):
        rk = resp.r[:, j]
        nk = mass[j]
        xbar = rk @ x / nk
        ybar = rk @ y / nk

        if dx > 0:
            xc = x - xbar
            yc = y - ybar
            sxx = (rk[:, None] * xc).T @ xc
            syx = (rk[:, None] * yc).T @ xc
            try:
                w_x = solve(sxx + eta_wx * eye(dx), syx.T, assume_a='sym').T
            except LinAlgError as e:
                raise ConditioningError(f"Regression normal equations of component {j} are singular.") from e
        else:
            w_x = zeros((dim, 0))
        mu = ybar - w_x @ xbar

        resid = y - x @ w_x.T - mu
        scatter = (rk[:, None] * resid).T @ resid / nk
        scatter = (scatter + scatter.T) / 2

        psi_prev = None if prev is None else prev.components[j].psi
        w_t = _latent_loading(scatter, dt, psi_prev) if dt > 0 else zeros((dim, 0))

        psi = scatter - w_t @ w_t.T
        psi = (psi + psi.T) / 2
        if enforce_block_diagonal:
            psi[:data.d1, data.d1:] = 0.0
            psi[data.d1:, :data.d1] = 0.0
        psi = _floor_psi(psi, max(1e-6 * scatter.trace() / dim, 1e-12))

        comps.append(ComponentParams(pi=weights[j], mu=mu, w_x=w_x, w_t=w_t, psi=psi))

    return MppccaModel(tuple(comps), dt, eta_c=eta_c, eta_wx=eta_wx, d1=data.d1)


def _reinitialize(data, resp, component, size, rng):
    """
    Give `component` the `size` samples nearest (in joint (x, y) space) to a randomly drawn sample.
    """
    joint = hstack((data.x, data.y))
    center = joint[rng.integers(data.n_samples)]
    nearest = argsort(npsum((joint - center) ** 2, axis=1), kind='stable')[:size]

    labels = resp.labels.copy()
    labels[nearest] = component
    return Responsibilities.one_hot(labels, resp.k)


def _run_em(data, resp, dt, config, floor):
    lls = []
    assignments = [] if config.track_assignments else None
    violations = 0
    converged = False

    try:
        model = m_step(data, resp, None, dt=dt, eta_c=config.eta_c, eta_wx=config.eta_wx,
                       enforce_block_diagonal=config.enforce_block_diagonal, mass_floor=floor)

        for it in range(1, config.max_iters + 1):
            resp, ll = _expectation(model, data)
            if assignments is not None:
                assignments.append(resp.labels)
            if lls:
                delta = ll - lls[-1]
                if delta < -MONOTONE_RTOL * abs(lls[-1]):
                    violations += 1
                    logger.debug(f"Log-likelihood decreased by {-delta:.3g} at iteration {it}.")
                lls.append(ll)
                if abs(delta) < config.tol * abs(ll):
                    converged = True
                    break
            else:
                lls.append(ll)
            logger.debug(f"Iteration {it}: log-likelihood {ll:.10g}")

            if it == config.max_iters:
                break
            model = m_step(data, resp, model, enforce_block_diagonal=config.enforce_block_diagonal,
                           mass_floor=floor)
    except EmptyClusterError as e:
        # responsibilities the failing M-step was given, for re-initialization
        e.resp = resp
        raise

    return model, resp, lls, converged, violations, assignments


def _conditional_regression(c, d1, eta_c):
    """
    Regression of y1 on (x, y2) implied by a component, y1 = a x + b y2 + c0 + e with cov(e) = r.
    """
    cov = component_covariance(c, eta_c)
    c12, c22 = cov[:d1, d1:], cov[d1:, d1:]
    b = solve(c22, c12.T, assume_a='pos').T
    a = c.w_x[:d1] - b @ c.w_x[d1:]
    c0 = c.mu[:d1] - b @ c.mu[d1:]
    r = cov[:d1, :d1] - b @ c12.T
    return a, b, c0, (r + r.T) / 2


def relation_groups(model, data, resp, tol=1.0):
    """
    Group the components of a model that describe the same relation between y1 and (x, y2).

    Two components are duplicates when their predictions of y1 from (x, y2), averaged over the samples either
    of them is responsible for, differ by less than `tol` in units of their mean residual covariance. Groups
    are the connected components of the duplicate graph.

    Parameters
    ----------
    model : MppccaModel
    data : RegressionDataset
    resp : Responsibilities
        Responsibilities of `data` under `model`.
    tol : float, optional
        Duplicate threshold on the mean squared prediction difference per y1 dimension. Default is 1.0.

    Returns
    -------
    groups : list
        Lists of component indices, in order of their smallest index.
    """
    _check_shapes(model, data)
    d1 = data.d1
    predictions, residuals = [], []
    for c in model.components:
        a, b, c0, r = _conditional_regression(c, d1, model.eta_c)
        predictions.append(data.x @ a.T + data.y2 @ b.T + c0)
        residuals.append(r)

    duplicate = zeros((model.k, model.k), dtype=bool)
    for i in range(model.k):
        for j in range(i + 1, model.k):
            w = resp.r[:, i] + resp.r[:, j]
            diff = predictions[i] - predictions[j]
            z = solve((residuals[i] + residuals[j]) / 2, diff.T, assume_a='pos')
            score = w @ npsum(diff.T * z, axis=0) / (w.sum() * d1)
            duplicate[i, j] = score < tol

    n_groups, labels = connected_components(csr_matrix(duplicate), directed=False)
    return [flatnonzero(labels == g).tolist() for g in range(n_groups)]


def _regroup(data, resp, groups, dt, config, floor):
    """
    Merge every group into one component, then split the heaviest component along the principal axis of its
    residual covariance until there are k components again.
    """
    k = resp.k
    r = minimum(hstack([resp.r[:, g].sum(axis=1, keepdims=True) for g in groups]), 1.0)
    while r.shape[1] < k:
        model = m_step(data, Responsibilities(r), None, dt=dt, eta_c=config.eta_c, eta_wx=config.eta_wx,
                       enforce_block_diagonal=config.enforce_block_diagonal, mass_floor=floor)
        h = int(argmax(r.sum(axis=0)))
        c = model.components[h]
        axis = eigh(component_covariance(c, model.eta_c))[1][:, -1]
        side = (data.y - data.x @ c.w_x.T - c.mu) @ axis >= 0

        r = hstack((r, (r[:, h] * ~side)[:, None]))
        r[:, h] *= side
    return Responsibilities(r)


def _run_em_with_retries(data, resp, dt, config, floor, size, rng, restart):
    retries = 0
    while True:
        try:
            return _run_em(data, resp, dt, config, floor)
        except EmptyClusterError as e:
            if retries >= config.reinit_retries:
                raise
            retries += 1
            logger.debug(f"Restart {restart}: re-initializing component {e.component} (retry {retries}).")
            resp = _reinitialize(data, e.resp, e.component, size, rng)


def _run_restart(data, k, dt, config, restart, seed_seq):
    """
    One EM restart. Returns (restart, result, error) so it can run in a worker process.
    """
    rng = default_rng(seed_seq)
    floor = config.resolved_mass_floor(dt)
    labels = kmeans(hstack((data.x, data.y)), k, seed=int(rng.integers(2 ** 31 - 1))).labels
    resp = Responsibilities.one_hot(labels, k)
    size = min(data.n_samples, max(int(ceil(floor)), data.n_samples // k))

    try:
        model, resp, lls, converged, violations, assignments = _run_em_with_retries(
            data, resp, dt, config, floor, size, rng, restart)
    except EmptyClusterError as e:
        return restart, None, e

    regrouped_at = None
    if config.regroup and k > 1:
        groups = relation_groups(model, data, resp, config.duplicate_tol)
        if len(groups) < k:
            logger.debug(f"Restart {restart}: regrouping components {groups}.")
            try:
                start = _regroup(data, resp, groups, dt, config, floor)
                second = _run_em_with_retries(data, start, dt, config, floor, size, rng, restart)
            except EmptyClusterError as e:
                logger.debug(f"Restart {restart}: regrouping abandoned, {e}")
            else:
                regrouped_at = len(lls)
                model, resp, more, converged, more_violations, more_assignments = second
                lls = lls + more
                violations += more_violations
                if assignments is not None:
                    assignments = assignments + more_assignments

    trace = FitTrace(
        log_likelihood_per_iter=lls,
        n_iters=len(lls),
        converged=converged,
        seed=config.seed,
        restart=restart,
        monotonicity_violations=violations,
        assignments_per_iter=assignments,
        regrouped_at=regrouped_at
    )
    return restart, (model, resp, trace), None


def fit(data, k, dt=None, config=None):
    """
    Fit an MPPCCA model by EM with k-means initialization and independent restarts.

    Parameters
    ----------
    data : RegressionDataset
        Regression blocks.
    k : int
        Number of components.
    dt : {None, int}, optional
        Latent dimension. Default is None, which uses min(d1, d2).
    config : {None, FitConfig}, optional
        EM options. Default is None, which uses ``FitConfig()``.

    Returns
    -------
    model : MppccaModel
        Model of the restart with the highest final log-likelihood (ties go to the lowest restart index).
    resp : Responsibilities
        Responsibilities of `data` under `model`.
    trace : FitTrace
        Trace of the winning restart.

    Raises
    ------
    EmptyClusterError
        If every restart exhausted its component re-initialization retries.

    Warns
    -----
    UserWarning
        If N <= k (dx + d1 + d2), if a restart is discarded, or if the winning restart did not converge.

    Notes
    -----
    k-means in the joint (x, y) space splits a high-variance relation into several clusters, and the
    conditional likelihood cannot tell those clusters apart, so EM keeps two components on one relation while
    a heavier relation is left with one. With ``config.regroup`` each restart checks its EM result with
    :func:`relation_groups`. If fewer than k relations are found, every group is merged into one component,
    the heaviest component is split along its principal residual axis until there are k components again, and
    EM runs once more from there. Surplus components therefore end up on the relation with the most samples.
    """
    config = FitConfig() if config is None else config
    if k < 1:
        raise ValueError("k must be greater than 0.")
    dt = min(data.d1, data.d2) if dt is None else dt
    if not 0 <= dt <= min(data.d1, data.d2):
        raise ValueError(f"dt must be between 0 and min(d1, d2) = {min(data.d1, data.d2)}.")
    if data.n_samples < k:
        raise InsufficientSamples(f"{data.n_samples} samples cannot be split into {k} components.")
    if data.n_samples <= k * (data.dx + data.d1 + data.d2):
        warn(f"Only {data.n_samples} samples for {k} components of total dimension "
             f"{data.dx + data.d1 + data.d2}; estimates may be unstable.", UserWarning)

    seeds = SeedSequence(config.seed).spawn(config.restarts)
    args = [(data, k, dt, config, i, s) for i, s in enumerate(seeds)]
    logger.info(f"Fitting K={k}, dt={dt} on N={data.n_samples} samples with {config.restarts} restart(s).")

    if config.n_jobs > 1 and config.restarts > 1:
        with Pool(min(config.n_jobs, config.restarts)) as pool:
            results = pool.starmap(_run_restart, args)
    else:
        results = [_run_restart(*a) for a in args]

    best, last_error = None, None
    for restart, result, error in sorted(results, key=lambda res: res[0]):
        if result is None:
            warn(f"Restart {restart} discarded: {error}", UserWarning)
            last_error = error
            continue
        logger.info(f"Restart {restart}: log-likelihood {result[2].final_log_likelihood:.10g} after "
                    f"{result[2].n_iters} iterations.")
        if best is None or result[2].final_log_likelihood > best[2].final_log_likelihood:
            best = result

    if best is None:
        raise last_error
    if not best[2].converged:
        warn(f"EM did not converge within {config.max_iters} iterations.", UserWarning)
    if best[2].monotonicity_violations > 0:
        warn(f"Log-likelihood decreased in {best[2].monotonicity_violations} EM step(s).", UserWarning)
    return best
