"""Single-output Gaussian-process regression.

Kernel evaluation (squared-exponential, optionally times a standard periodic
factor), marginal likelihood via Cholesky, direct-search hyperparameter
fitting in log space, posterior conditioning, and seeded path sampling.
Near-singular matrices are handled by a fixed jitter escalation ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .errors import NumericalFailure
from .series import TimeGrid, TimeSeries

__all__ = [
    "KernelParams",
    "GpPosterior",
    "OptimizerConfig",
    "JITTER_LADDER",
    "cholesky_with_jitter",
    "kernel_matrix",
    "log_marginal_likelihood",
    "fit_hyperparams",
    "maximize_kernel_objective",
    "posterior",
    "sample_paths",
]

# Jitter escalation ladder; factorization is attempted with each value in turn.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

_LOG_2PI = math.log(2.0 * math.pi)
_NOISE_FLOOR = 1e-12  # keeps log-space optimization defined at noise_var = 0


@dataclass(frozen=True)
class KernelParams:
    """Kernel hyperparameters plus the observation noise variance."""

    variance: float
    lengthscale: float
    period: float | None = None
    noise_var: float = 0.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.period is not None and self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be nonnegative, got {self.noise_var}")


@dataclass
class GpPosterior:
    """Mean vector and covariance matrix of a GP on a query grid."""

    grid: TimeGrid
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.grid.n
        if self.mean.shape != (n,):
            raise ValueError(f"mean must have length {n}, got {self.mean.shape}")
        if self.cov.shape != (n, n):
            raise ValueError(f"cov must be {n}x{n}, got {self.cov.shape}")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10:
            raise ValueError("cov is not symmetric within 1e-10")
        self.cov = 0.5 * (self.cov + self.cov.T)


@dataclass(frozen=True)
class OptimizerConfig:
    """Direct-search settings for hyperparameter fitting.

    ``restarts`` counts total starts: the supplied initialization plus
    randomly perturbed copies of it.
    """

    restarts: int = 5
    max_iter: int = 200
    tol: float = 1e-6
    perturb_scale: float = 0.5
    seed: int = 0


def cholesky_with_jitter(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky-factor a symmetric matrix, escalating diagonal jitter on failure."""
    eye = np.eye(mat.shape[0])
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure(
        f"Cholesky failed for {mat.shape[0]}x{mat.shape[0]} matrix "
        f"even with jitter {JITTER_LADDER[-1]:g}",
        jitter=JITTER_LADDER[-1],
    )


def kernel_matrix(params: KernelParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between point sets a and b (noise NOT added)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a[:, None] - b[None, :]
    ell2 = params.lengthscale**2
    k = params.variance * np.exp(-0.5 * d**2 / ell2)
    if params.period is not None:
        k = k * np.exp(-2.0 * np.sin(np.pi * d / params.period) ** 2 / ell2)
    return k


def _gaussian_loglik(residual: np.ndarray, cov: np.ndarray) -> float:
    """log N(residual | 0, cov) via Cholesky with jitter escalation."""
    chol, _ = cholesky_with_jitter(cov)
    alpha = solve_triangular(chol, residual, lower=True, check_finite=False)
    return float(
        -0.5 * alpha @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * len(residual) * _LOG_2PI
    )


def log_marginal_likelihood(params: KernelParams, mean_fn: np.ndarray, ts: TimeSeries) -> float:
    """log N(y | mean_fn, K + noise_var*I) for the series' own grid."""
    mean_fn = np.asarray(mean_fn, dtype=float)
    if mean_fn.shape != ts.values.shape:
        raise ValueError("mean_fn length must match the series length")
    t = ts.grid.points()
    cov = kernel_matrix(params, t, t) + params.noise_var * np.eye(ts.grid.n)
    return _gaussian_loglik(ts.values - mean_fn, cov)


def _pack(params: KernelParams) -> np.ndarray:
    x = [math.log(params.variance), math.log(params.lengthscale),
         math.log(max(params.noise_var, _NOISE_FLOOR))]
    if params.period is not None:
        x.append(math.log(params.period))
    return np.array(x)


def _unpack(x: np.ndarray, has_period: bool) -> KernelParams:
    return KernelParams(
        variance=math.exp(x[0]),
        lengthscale=math.exp(x[1]),
        noise_var=math.exp(x[2]),
        period=math.exp(x[3]) if has_period else None,
    )


def maximize_kernel_objective(objective, init: KernelParams, opt: OptimizerConfig | None = None) -> KernelParams:
    """Maximize an objective over kernel parameters by Nelder-Mead in log space.

    The initialization is always evaluated and kept as a candidate, so the
    returned parameters never score worse than ``init``. Candidate points
    where the objective raises :class:`NumericalFailure` are skipped.
    """
    opt = opt or OptimizerConfig()
    has_period = init.period is not None

    def neg(x: np.ndarray) -> float:
        if np.any(np.abs(x) > 50):  # exp overflow guard
            return np.inf
        try:
            return -objective(_unpack(x, has_period))
        except NumericalFailure:
            return np.inf

    x0 = _pack(init)
    best_x, best_val = x0, neg(x0)
    if not np.isfinite(best_val):
        # surface the init failure to the caller
        objective(init)

    rng = np.random.default_rng(opt.seed)
    starts = [x0]
    for _ in range(max(0, opt.restarts - 1)):
        starts.append(x0 + opt.perturb_scale * rng.standard_normal(len(x0)))
    for start in starts:
        res = minimize(
            neg,
            start,
            method="Nelder-Mead",
            options={
                "maxiter": opt.max_iter,
                "maxfev": 2 * opt.max_iter,
                "fatol": opt.tol,
                "xatol": 1e-4,
            },
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_x, best_val = res.x, res.fun
    return _unpack(best_x, has_period)


def fit_hyperparams(
    ts: TimeSeries,
    mean_fn: np.ndarray,
    init: KernelParams,
    opt: OptimizerConfig | None = None,
) -> KernelParams:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood."""
    return maximize_kernel_objective(
        lambda p: log_marginal_likelihood(p, mean_fn, ts), init, opt
    )


def condition_gaussian(
    prior_mean_obs: np.ndarray,
    prior_mean_query: np.ndarray,
    cov_oo: np.ndarray,
    cov_qo: np.ndarray,
    cov_qq: np.ndarray,
    y_obs: np.ndarray,
    noise_var: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Condition a joint Gaussian on noisy observations of its first block."""
    gram = cov_oo + noise_var * np.eye(len(y_obs))
    chol, _ = cholesky_with_jitter(gram)
    resid = solve_triangular(chol, y_obs - prior_mean_obs, lower=True, check_finite=False)
    cross = solve_triangular(chol, cov_qo.T, lower=True, check_finite=False)
    mean = prior_mean_query + cross.T @ resid
    cov = cov_qq - cross.T @ cross
    return mean, 0.5 * (cov + cov.T)


def posterior(
    params: KernelParams,
    prior_mean: np.ndarray,
    train: TimeSeries | None,
    query: TimeGrid,
) -> GpPosterior:
    """GP posterior on `query` given `train`, with prior mean over train++query.

    ``prior_mean`` is the prior mean vector over the concatenation of the
    training points followed by the query points. With no training data the
    prior is returned unchanged.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    tq = query.points()
    if train is None or train.grid.n == 0:
        if prior_mean.shape != (query.n,):
            raise ValueError("prior_mean must cover the query grid")
        return GpPosterior(query, prior_mean, kernel_matrix(params, tq, tq))
    tt = train.grid.points()
    nt = train.grid.n
    if prior_mean.shape != (nt + query.n,):
        raise ValueError("prior_mean must cover train points followed by query points")
    mean, cov = condition_gaussian(
        prior_mean[:nt],
        prior_mean[nt:],
        kernel_matrix(params, tt, tt),
        kernel_matrix(params, tq, tt),
        kernel_matrix(params, tq, tq),
        train.values,
        params.noise_var,
    )
    return GpPosterior(query, mean, cov)


def sample_paths(post: GpPosterior, s: int, seed: int) -> np.ndarray:
    """Draw s posterior sample paths as an (s, n) array, seeded."""
    if s < 1:
        raise ValueError(f"need at least one sample, got {s}")
    chol, _ = cholesky_with_jitter(post.cov)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((s, post.grid.n))
    return post.mean + z @ chol.T
