import pytest
from numpy import allclose, isclose, array, zeros, eye, diag, sqrt, log, abs as npabs, hstack, ones, nan, inf
from numpy.linalg import solve, svd, eigh, lstsq
from numpy.random import default_rng

from causalpatterns.base import RegressionDataset, ConditioningError, DomainError, InsufficientSamples
from causalpatterns.pcca import CovarianceBundle, partial_covariance, solve_pcca, granger_index, \
    granger_from_blocks, granger_trace_index, default_ridge

from causalpatterns.tests.test_pcca.conftest import joint_covariance


def _inv_sqrt(m):
    evals, evecs = eigh(m)
    return evecs @ diag(evals ** -0.5) @ evecs.T


def _svd_oracle(kw):
    """Canonical correlations by explicit partial covariances, whitening and an SVD."""
    s11, s22, s12 = kw['sigma_11'], kw['sigma_22'], kw['sigma_12']
    if kw['sigma_xx'].size > 0:
        sxx, s1x, s2x = kw['sigma_xx'], kw['sigma_1x'], kw['sigma_2x']
        s11 = s11 - s1x @ solve(sxx, s1x.T)
        s22 = s22 - s2x @ solve(sxx, s2x.T)
        s12 = s12 - s1x @ solve(sxx, s2x.T)
    return svd(_inv_sqrt(s11) @ s12 @ _inv_sqrt(s22), compute_uv=False)


def _ols_residuals(target, regressors):
    design = hstack((ones((target.shape[0], 1)), regressors))
    coef = lstsq(design, target, rcond=None)[0]
    return target - design @ coef


class TestPartialCovariance:
    def test_no_conditioning_influence(self):
        sigma_ab = array([[1.0, 0.3], [0.2, 0.7]])
        out = partial_covariance(sigma_ab, zeros((2, 3)), eye(3), zeros((3, 2)))

        assert allclose(out, sigma_ab)

    def test_scalars(self):
        assert isclose(partial_covariance(1.0, 0.5, 1.0, 0.5, ridge=0), 0.75)

    def test_empty_conditioning_is_identity(self):
        sigma_ab = array([[2.0, 0.5], [0.5, 1.0]])
        out = partial_covariance(sigma_ab, zeros((2, 0)), zeros((0, 0)), zeros((0, 2)))

        assert (out == sigma_ab).all()

    def test_ridge(self):
        # 1 - 0.5 * 0.5 / (1 + 1)
        assert isclose(partial_covariance(1.0, 0.5, 1.0, 0.5, ridge=1.0), 0.875)

    def test_singular_conditioning(self):
        with pytest.raises(ConditioningError):
            partial_covariance(eye(2), ones((2, 2)), ones((2, 2)), ones((2, 2)), ridge=0)

    def test_negative_ridge(self):
        with pytest.raises(ValueError):
            partial_covariance(1.0, 0.5, 1.0, 0.5, ridge=-1.0)

    def test_sample_residual_covariance(self):
        rng = default_rng(3)
        data = rng.standard_normal((500, 5)) @ rng.standard_normal((5, 5))
        a, b, c = data[:, :2], data[:, 2:3], data[:, 3:]
        cov = (data - data.mean(axis=0)).T @ (data - data.mean(axis=0)) / data.shape[0]

        out = partial_covariance(cov[:2, 2:3], cov[:2, 3:], cov[3:, 3:], cov[3:, 2:3], ridge=0)
        ra, rb = _ols_residuals(a, c), _ols_residuals(b, c)

        assert allclose(out, ra.T @ rb / data.shape[0], rtol=0, atol=1e-10)

    def test_monte_carlo_residual_covariance(self):
        sigma = array([[2.0, 1.2, 0.5], [1.2, 2.0, 0.4], [0.5, 0.4, 1.0]])
        samples = default_rng(0).multivariate_normal(zeros(3), sigma, size=100000)
        ra = _ols_residuals(samples[:, :1], samples[:, 2:])
        rb = _ols_residuals(samples[:, 1:2], samples[:, 2:])

        expected = partial_covariance(sigma[0, 1], sigma[0, 2], sigma[2, 2], sigma[2, 1], ridge=0)

        assert isclose(expected, 1.0)
        assert isclose((ra.T @ rb / samples.shape[0])[0, 0], expected[0, 0], rtol=0.02)


class TestCovarianceBundle:
    def test_from_blocks(self, correlated_blocks):
        bundle = CovarianceBundle.from_blocks(correlated_blocks.y1, correlated_blocks.y2, correlated_blocks.x)
        y1 = correlated_blocks.y1 - correlated_blocks.y1.mean(axis=0)

        assert bundle.dims == (1, 2, 1)
        assert bundle.n_samples == 2000
        assert isclose(bundle.sigma_11[0, 0], (y1 ** 2).mean())

    @pytest.mark.parametrize('sigma_11', ([[1.0, 0.5], [0.0, 1.0]], [[1.0, 2.0], [2.0, 1.0]]))
    def test_invalid_covariance(self, sigma_11):
        with pytest.raises(ValueError):
            CovarianceBundle(sigma_11=sigma_11, sigma_22=[[1.0]], sigma_12=zeros((2, 1)), sigma_1x=zeros((2, 0)),
                             sigma_2x=zeros((1, 0)), sigma_xx=zeros((0, 0)), n_samples=10)

    def test_too_few_samples(self, scalar_bundle_args):
        scalar_bundle_args['n_samples'] = 1
        with pytest.raises(InsufficientSamples):
            CovarianceBundle(**scalar_bundle_args)


class TestSolvePcca:
    def test_independent_blocks(self):
        bundle = CovarianceBundle(sigma_11=eye(2), sigma_22=eye(3), sigma_12=zeros((2, 3)), sigma_1x=zeros((2, 1)),
                                  sigma_2x=zeros((3, 1)), sigma_xx=eye(1), n_samples=50)
        solution = solve_pcca(bundle)

        assert solution.rho.shape == (2, )
        assert allclose(solution.rho, 0.0)

    def test_plain_correlation(self, scalar_bundle_args):
        solution = solve_pcca(CovarianceBundle(**scalar_bundle_args), ridge=0)

        assert isclose(solution.rho1, 0.8)

    def test_directions_normalized(self, random_spd):
        kw = joint_covariance(random_spd, (3, 2, 2), seed=1)
        solution = solve_pcca(CovarianceBundle(**kw), ridge=0)
        s22 = kw['sigma_22'] - kw['sigma_2x'] @ solve(kw['sigma_xx'], kw['sigma_2x'].T)
        u2 = solution.directions_2

        assert solution.directions_1.shape == (3, 2)
        assert allclose(diag(u2.T @ s22 @ u2), 1.0)

    def test_sorted_and_bounded(self, random_spd):
        kw = joint_covariance(random_spd, (4, 3, 2), seed=2)
        rho = solve_pcca(CovarianceBundle(**kw)).rho

        assert rho.size == 3
        assert (rho[:-1] >= rho[1:]).all()
        assert ((rho >= 0) & (rho <= 1)).all()

    def test_svd_oracle(self, random_spd):
        rng = default_rng(2024)
        worst = 0.0
        for seed in range(100):
            dims = tuple(int(d) for d in rng.integers(1, 5, size=2)) + (int(rng.integers(0, 4)), )
            kw = joint_covariance(random_spd, dims, seed=seed)
            rho = solve_pcca(CovarianceBundle(**kw), ridge=0).rho
            expected = _svd_oracle(kw)[:rho.size]
            worst = max(worst, npabs(rho - expected).max())

        assert worst < 1e-7

    def test_invariance_to_block_transforms(self):
        rng = default_rng(9)
        n = 300
        x = rng.standard_normal((n, 2))
        y2 = rng.standard_normal((n, 3))
        y1 = y2[:, :2] @ rng.standard_normal((2, 2)) + x @ rng.standard_normal((2, 2)) \
            + rng.standard_normal((n, 2))
        a = rng.standard_normal((2, 2)) + 3 * eye(2)
        b = rng.standard_normal((3, 3)) + 3 * eye(3)

        rho = solve_pcca(CovarianceBundle.from_blocks(y1, y2, x), ridge=0).rho
        rho_t = solve_pcca(CovarianceBundle.from_blocks(y1 @ a.T, y2 @ b.T, x), ridge=0).rho

        assert npabs(rho - rho_t).max() < 1e-8


class TestGrangerIndex:
    @pytest.mark.parametrize(('rho1', 'gc'), ((0.0, 0.0), (sqrt(0.75), 1.0), (sqrt(0.9375), 2.0)))
    def test_closed_form(self, rho1, gc):
        assert isclose(granger_index(rho1), gc)

    def test_monotone(self):
        values = [granger_index(r) for r in (0.0, 0.1, 0.5, 0.9, 0.999)]

        assert all(a < b for a, b in zip(values[:-1], values[1:]))

    @pytest.mark.parametrize('rho1', (1.0, 1.5, -0.1, nan, inf))
    def test_domain(self, rho1):
        with pytest.raises(DomainError):
            granger_index(rho1)

    def test_zero_iff_uncorrelated(self):
        assert granger_index(0.0) == 0.0
        assert granger_index(1e-6) > 0.0


class TestGrangerFromBlocks:
    def test_independent_noise(self, independent_blocks):
        estimate = granger_from_blocks(independent_blocks)

        assert estimate.n_samples == 3000
        assert estimate.gc_index < 0.05

    def test_matches_regression(self, correlated_blocks):
        d = correlated_blocks
        restricted = _ols_residuals(d.y1, d.x).var()
        full = _ols_residuals(d.y1, hstack((d.x, d.y2))).var()

        estimate = granger_from_blocks(d)

        assert isclose(estimate.gc_index, 0.5 * log(restricted / full) / log(2.0), rtol=0, atol=1e-6)

    def test_insufficient_samples(self):
        data = RegressionDataset(x=[[0.0], [1.0], [2.0]], y1=[[1.0], [0.0], [2.0]], y2=[[0.5], [1.0], [0.0]])

        with pytest.raises(InsufficientSamples):
            granger_from_blocks(data)

    def test_ground_truth_cluster(self, exp1_dataset, exp1_truth):
        estimate = granger_from_blocks(exp1_dataset.subset(exp1_truth == 0))

        assert isclose(estimate.gc_index, 4.59, rtol=0.15)

    def test_whole_series(self, exp1_dataset):
        assert isclose(granger_from_blocks(exp1_dataset).gc_index, 0.18, rtol=0, atol=0.04)


class TestTraceIndex:
    def test_scalar_effect_agreement(self, correlated_blocks):
        gc = granger_from_blocks(correlated_blocks, ridge=0).gc_index

        assert isclose(granger_trace_index(correlated_blocks, ridge=0), 2 * log(2.0) * gc, rtol=0, atol=1e-6)

    def test_nonnegative(self, independent_blocks):
        assert granger_trace_index(independent_blocks) >= 0.0


def test_default_ridge():
    assert isclose(default_ridge(diag([1.0, 3.0])), 2e-8)
    assert default_ridge(zeros((0, 0))) == 0.0
