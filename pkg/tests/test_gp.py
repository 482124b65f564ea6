import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from dominogp.gp import (
    GpPosterior,
    KernelParams,
    OptimizerConfig,
    fit_hyperparams,
    kernel_matrix,
    log_marginal_likelihood,
    posterior,
    sample_paths,
)
from dominogp.series import TimeSeries, make_grid


SE = KernelParams(variance=1.0, lengthscale=1.0, noise_var=0.0)


class TestKernelMatrix:
    def test_zero_distance_gives_variance(self):
        params = KernelParams(variance=2.0, lengthscale=1.0)
        assert kernel_matrix(params, [0.0], [0.0])[0, 0] == pytest.approx(2.0)

    def test_large_distance_decays(self):
        assert kernel_matrix(SE, [0.0], [100.0])[0, 0] < 1e-300

    def test_hand_computed_entries(self):
        k = kernel_matrix(SE, [0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
        np.testing.assert_allclose(np.diag(k), 1.0)
        assert k[0, 1] == pytest.approx(math.exp(-0.5))
        assert k[0, 2] == pytest.approx(math.exp(-2.0))

    def test_periodic_factor_repeats(self):
        params = KernelParams(variance=1.0, lengthscale=1.5, period=3.0)
        k = kernel_matrix(params, [0.0], [3.0])[0, 0]
        se_only = kernel_matrix(
            KernelParams(variance=1.0, lengthscale=1.5), [0.0], [3.0]
        )[0, 0]
        # at a whole period the periodic factor is exactly 1
        assert k == pytest.approx(se_only)

    def test_self_kernel_symmetric_psd(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            params = KernelParams(
                variance=float(rng.uniform(0.1, 5)),
                lengthscale=float(rng.uniform(0.1, 5)),
                period=float(rng.uniform(0.5, 5)) if rng.random() < 0.5 else None,
            )
            t = np.sort(rng.uniform(0, 10, size=8))
            k = kernel_matrix(params, t, t)
            np.testing.assert_allclose(k, k.T, atol=1e-12)
            eigs = np.linalg.eigvalsh(k)
            assert eigs.min() >= -1e-8 * np.trace(k)


class TestLogMarginalLikelihood:
    def _series(self, values, step=1.0):
        values = np.asarray(values, dtype=float)
        return TimeSeries(0, make_grid(0, step, len(values)), values)

    def test_standard_normal_at_mean(self):
        # y == mean and K + noise = I  =>  -(N/2) log(2 pi)
        n = 4
        ts = self._series(np.ones(n) * 3.0, step=100.0)  # far-apart points: K ~ diag
        params = KernelParams(variance=0.5, lengthscale=1e-3, noise_var=0.5)
        got = log_marginal_likelihood(params, ts.values, ts)
        assert got == pytest.approx(-0.5 * n * math.log(2 * math.pi), abs=1e-12)

    def test_larger_residual_is_less_likely(self):
        ts = self._series([0.1, -0.2, 0.3, 0.0, -0.1])
        params = KernelParams(variance=1.0, lengthscale=1.0, noise_var=0.1)
        mean = np.zeros(5)
        small = log_marginal_likelihood(params, mean, ts)
        big = log_marginal_likelihood(
            params, mean, self._series(ts.values * 10)
        )
        assert big < small

    def test_matches_dense_gaussian_density_oracle(self):
        rng = np.random.default_rng(7)
        t = np.arange(5.0)
        for _ in range(10):
            params = KernelParams(
                variance=float(rng.uniform(0.2, 3)),
                lengthscale=float(rng.uniform(0.3, 4)),
                noise_var=float(rng.uniform(0.01, 1)),
            )
            y = rng.normal(size=5)
            mean = rng.normal(size=5)
            ts = self._series(y)
            cov = kernel_matrix(params, t, t) + params.noise_var * np.eye(5)
            expected = multivariate_normal(mean=mean, cov=cov).logpdf(y)
            got = log_marginal_likelihood(params, mean, ts)
            assert got == pytest.approx(expected, abs=1e-8)


class TestFitHyperparams:
    def test_generate_then_fit_recovers_lengthscale(self):
        true = KernelParams(variance=1.0, lengthscale=2.0, noise_var=1e-4)
        grid = make_grid(0, 0.5, 40)
        t = grid.points()
        cov = kernel_matrix(true, t, t) + true.noise_var * np.eye(grid.n)
        rng = np.random.default_rng(0)
        y = np.linalg.cholesky(cov) @ rng.standard_normal(grid.n)
        ts = TimeSeries(0, grid, y)
        init = KernelParams(variance=0.5, lengthscale=0.7, noise_var=0.01)
        fitted = fit_hyperparams(ts, np.zeros(grid.n), init, OptimizerConfig(restarts=3))
        assert 1.0 <= fitted.lengthscale <= 4.0

    def test_never_worse_than_init(self):
        rng = np.random.default_rng(1)
        grid = make_grid(0, 1, 12)
        ts = TimeSeries(0, grid, rng.normal(size=12))
        init = KernelParams(variance=1.0, lengthscale=1.0, noise_var=0.5)
        fitted = fit_hyperparams(ts, np.zeros(12), init, OptimizerConfig(restarts=2, max_iter=40))
        before = log_marginal_likelihood(init, np.zeros(12), ts)
        after = log_marginal_likelihood(fitted, np.zeros(12), ts)
        assert after >= before - 1e-9

    def test_constant_series_finite(self):
        grid = make_grid(0, 1, 10)
        ts = TimeSeries(0, grid, np.full(10, 2.5))
        init = KernelParams(variance=1.0, lengthscale=1.0, noise_var=0.1)
        fitted = fit_hyperparams(ts, np.full(10, 2.5), init, OptimizerConfig(restarts=2, max_iter=60))
        assert fitted.noise_var < init.noise_var
        assert np.isfinite(log_marginal_likelihood(fitted, np.full(10, 2.5), ts))


def conditioning_oracle(params, prior_mean, t_train, y_train, t_query):
    """Brute-force block-matrix conditioning with explicit inverses."""
    nt = len(t_train)
    pts = np.concatenate([t_train, t_query])
    joint = kernel_matrix(params, pts, pts)
    k_tt = joint[:nt, :nt] + params.noise_var * np.eye(nt)
    k_qt = joint[nt:, :nt]
    k_qq = joint[nt:, nt:]
    inv = np.linalg.inv(k_tt)
    mean = prior_mean[nt:] + k_qt @ inv @ (y_train - prior_mean[:nt])
    cov = k_qq - k_qt @ inv @ k_qt.T
    return mean, cov


class TestPosterior:
    def test_noiseless_interpolation(self):
        grid = make_grid(0, 1, 5)
        rng = np.random.default_rng(2)
        ts = TimeSeries(0, grid, rng.normal(size=5))
        params = KernelParams(variance=1.0, lengthscale=1.0, noise_var=0.0)
        post = posterior(params, np.zeros(10), ts, grid)
        np.testing.assert_allclose(post.mean, ts.values, atol=1e-8)
        assert np.all(np.abs(np.diag(post.cov)) < 1e-8)

    def test_no_training_data_returns_prior(self):
        grid = make_grid(0, 1, 4)
        prior_mean = np.array([1.0, 2.0, 3.0, 4.0])
        post = posterior(SE, prior_mean, None, grid)
        np.testing.assert_array_equal(post.mean, prior_mean)
        t = grid.points()
        np.testing.assert_allclose(post.cov, kernel_matrix(SE, t, t))

    def test_matches_block_matrix_oracle(self):
        rng = np.random.default_rng(5)
        params = KernelParams(variance=1.3, lengthscale=0.9, noise_var=0.2)
        y = rng.normal(size=4)
        prior_mean = rng.normal(size=6)
        train = TimeSeries(0, make_grid(0, 1, 4), y)
        query = make_grid(1.5, 1.5, 2)  # points 1.5 and 3.0
        mean_o, cov_o = conditioning_oracle(
            params, prior_mean, train.grid.points(), y, query.points()
        )
        post = posterior(params, prior_mean, train, query)
        np.testing.assert_allclose(post.mean, mean_o, atol=1e-8)
        np.testing.assert_allclose(post.cov, cov_o, atol=1e-8)

    def test_posterior_variance_never_exceeds_prior(self):
        rng = np.random.default_rng(9)
        grid = make_grid(0, 1, 8)
        ts = TimeSeries(0, make_grid(0, 2, 4), rng.normal(size=4))
        params = KernelParams(variance=2.0, lengthscale=1.5, noise_var=0.3)
        post = posterior(params, np.zeros(12), ts, grid)
        assert np.all(np.diag(post.cov) <= params.variance + 1e-8)


class TestSamplePaths:
    def test_zero_covariance_returns_mean(self):
        grid = make_grid(0, 1, 6)
        mean = np.arange(6.0)
        post = GpPosterior(grid, mean, np.zeros((6, 6)))
        paths = sample_paths(post, 3, seed=1)
        np.testing.assert_allclose(paths, np.tile(mean, (3, 1)), atol=1e-3)

    def test_seed_reproducibility(self):
        grid = make_grid(0, 1, 5)
        t = grid.points()
        post = GpPosterior(grid, np.zeros(5), kernel_matrix(SE, t, t))
        a = sample_paths(post, 4, seed=11)
        b = sample_paths(post, 4, seed=11)
        c = sample_paths(post, 4, seed=12)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_monte_carlo_mean_concentration(self):
        grid = make_grid(0, 1, 5)
        t = grid.points()
        cov = kernel_matrix(KernelParams(variance=0.5, lengthscale=1.0), t, t)
        mean = np.sin(t)
        post = GpPosterior(grid, mean, cov)
        paths = sample_paths(post, 10_000, seed=3)
        bound = 4 * np.sqrt(np.diag(cov) / 10_000)
        assert np.all(np.abs(paths.mean(axis=0) - mean) <= bound)

    def test_empirical_covariance(self):
        grid = make_grid(0, 1, 5)
        t = grid.points()
        cov = kernel_matrix(KernelParams(variance=1.0, lengthscale=1.3), t, t)
        post = GpPosterior(grid, np.zeros(5), cov)
        paths = sample_paths(post, 20_000, seed=4)
        emp = np.cov(paths.T)
        rel = np.linalg.norm(emp - cov) / np.linalg.norm(cov)
        assert rel < 0.05

    def test_rejects_nonpositive_count(self):
        grid = make_grid(0, 1, 3)
        post = GpPosterior(grid, np.zeros(3), np.eye(3))
        with pytest.raises(ValueError):
            sample_paths(post, 0, seed=0)
