"""Multi-task GP with a shared latent mean, trained by EM.

All individuals live on one common grid. The E-step computes the closed-form
Gaussian posterior of the shared mean by precision addition; the M-step
refits the mean kernel and each individual's kernel against that posterior,
warm-started from the previous values, with the trace correction from the
mean's remaining uncertainty. Prediction for a new individual conditions a
GP whose prior is the shared-mean posterior (its covariance added to the
individual kernel) on the observed prefix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .domino import SampleBank
from .gp import (
    fit_hyperparams,
    GpPosterior,
    KernelParams,
    OptimizerConfig,
    cholesky_with_jitter,
    condition_gaussian,
    kernel_matrix,
    maximize_kernel_objective,
    sample_paths,
)
from .seeding import derive_seed
from .series import Dataset, TimeGrid, TimeSeries

__all__ = [
    "EmConfig",
    "MagmaModel",
    "e_step",
    "m_step",
    "fit_magma",
    "predict_magma",
    "posterior_for_individual",
    "build_sample_bank",
    "save_magma",
    "load_magma",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EmConfig:
    """EM loop settings."""

    max_iters: int = 25
    tol: float = 1e-5
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    period: float | None = None  # optional periodic kernel factor

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class MagmaModel:
    """Fitted shared-mean model."""

    grid: TimeGrid
    offset: float  # global centering constant, added back into mean_posterior
    mean_posterior: GpPosterior  # posterior of the shared mean, offset included
    mean_kernel: KernelParams
    individual_kernels: list[KernelParams]
    em_trace: list[float]
    series_ids: list[int]


def _precision_apply(cov: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve cov @ x = rhs via Cholesky with jitter escalation."""
    chol, _ = cholesky_with_jitter(cov)
    half = solve_triangular(chol, rhs, lower=True, check_finite=False)
    return solve_triangular(chol.T, half, lower=False, check_finite=False)


def e_step(
    dataset: Dataset,
    mean_kernel: KernelParams,
    individual_kernels: list[KernelParams],
    prior_mean: np.ndarray | None = None,
) -> GpPosterior:
    """Closed-form posterior of the shared mean by precision addition.

    precision = K0^-1 + sum_i Psi_i^-1 and
    mean = cov @ (K0^-1 m0 + sum_i Psi_i^-1 y_i),
    with Psi_i the individual kernel plus its noise and K0 the mean prior
    (its noise_var acts as a nugget). m0 defaults to zero.
    """
    if len(individual_kernels) != dataset.count:
        raise ValueError("need one kernel per series")
    t = dataset.grid.points()
    n = dataset.grid.n
    eye = np.eye(n)
    m0 = np.zeros(n) if prior_mean is None else np.asarray(prior_mean, dtype=float)

    k0 = kernel_matrix(mean_kernel, t, t) + mean_kernel.noise_var * eye
    precision = _precision_apply(k0, eye)
    rhs = precision @ m0
    for ts, params in zip(dataset.series, individual_kernels):
        psi = kernel_matrix(params, t, t) + params.noise_var * eye
        psi_inv = _precision_apply(psi, eye)
        precision = precision + psi_inv
        rhs = rhs + psi_inv @ ts.values
    cov = _precision_apply(precision, eye)
    cov = 0.5 * (cov + cov.T)
    return GpPosterior(dataset.grid, cov @ rhs, cov)


def _cov_factor(cov: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Thin factor R with R @ R.T ~= cov, truncating negligible eigenvalues.

    Factoring once lets every M-step objective evaluation compute
    tr(Psi^-1 cov) = ||L^-1 R||_F^2 against a thin right-hand side.
    """
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    cut = rel_tol * max(vals.max(), 0.0)
    keep = vals > cut
    if not keep.any():
        return np.zeros((cov.shape[0], 1))
    return vecs[:, keep] * np.sqrt(vals[keep])


def _expected_loglik(
    params: KernelParams, residual: np.ndarray, t: np.ndarray, mean_cov_factor: np.ndarray
) -> float:
    """log N(residual | 0, Psi) - 0.5 tr(Psi^-1 C), with C = R R^T pre-factored."""
    psi = kernel_matrix(params, t, t) + params.noise_var * np.eye(len(t))
    chol, _ = cholesky_with_jitter(psi)
    alpha = solve_triangular(chol, residual, lower=True, check_finite=False)
    half = solve_triangular(chol, mean_cov_factor, lower=True, check_finite=False)
    trace = float(np.sum(half**2))
    loglik = -0.5 * float(alpha @ alpha) - float(np.sum(np.log(np.diag(chol)))) - 0.5 * len(t) * _LOG_2PI
    return loglik - 0.5 * trace


def m_step(
    dataset: Dataset,
    mean_post: GpPosterior,
    mean_kernel: KernelParams,
    individual_kernels: list[KernelParams],
    opt: OptimizerConfig | None = None,
    prior_mean: np.ndarray | None = None,
) -> tuple[KernelParams, list[KernelParams]]:
    """Refit all kernels against the current mean posterior, warm-started.

    Each fit keeps the incoming parameters as a candidate, so the expected
    complete-data objective never decreases.
    """
    t = dataset.grid.points()
    m_hat = mean_post.mean
    cov_factor = _cov_factor(mean_post.cov)
    m0 = np.zeros(dataset.grid.n) if prior_mean is None else np.asarray(prior_mean, dtype=float)

    new_individual = []
    for k, (ts, params) in enumerate(zip(dataset.series, individual_kernels)):
        residual = ts.values - m_hat
        fit_opt = replace(opt, seed=derive_seed(opt.seed, "mstep", k)) if opt else None
        new_individual.append(
            maximize_kernel_objective(
                lambda p, r=residual: _expected_loglik(p, r, t, cov_factor), params, fit_opt
            )
        )
    mean_opt = replace(opt, seed=derive_seed(opt.seed, "mstep-mean")) if opt else None
    new_mean = maximize_kernel_objective(
        lambda p: _expected_loglik(p, m_hat - m0, t, cov_factor), mean_kernel, mean_opt
    )
    return new_mean, new_individual


def _elbo(
    dataset: Dataset,
    mean_post: GpPosterior,
    mean_kernel: KernelParams,
    individual_kernels: list[KernelParams],
    prior_mean: np.ndarray | None = None,
) -> float:
    """Evidence lower bound: expected complete-data log-likelihood + entropy."""
    t = dataset.grid.points()
    n = dataset.grid.n
    m0 = np.zeros(n) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    cov_factor = _cov_factor(mean_post.cov)
    total = _expected_loglik(mean_kernel, mean_post.mean - m0, t, cov_factor)
    for ts, params in zip(dataset.series, individual_kernels):
        total += _expected_loglik(params, ts.values - mean_post.mean, t, cov_factor)
    sign, logdet = np.linalg.slogdet(mean_post.cov + 1e-12 * np.eye(n))
    entropy = 0.5 * (n * (1.0 + _LOG_2PI) + logdet)
    return total + entropy


def _init_params(dataset: Dataset, period: float | None) -> KernelParams:
    pooled_var = max(float(np.var(dataset.values_matrix())), 1e-6)
    return KernelParams(
        variance=pooled_var,
        lengthscale=max(dataset.grid.span / 10.0, 1e-6),
        noise_var=0.05 * pooled_var,
        period=period,
    )


def fit_magma(dataset: Dataset, config: EmConfig | None = None) -> MagmaModel:
    """Train the shared-mean model by EM on a centered copy of the dataset."""
    config = config or EmConfig()
    offset = float(np.mean(dataset.values_matrix()))
    centered = Dataset(
        [TimeSeries(s.id, s.grid, s.values - offset) for s in dataset.series]
    )
    init = _init_params(centered, config.period)
    mean_kernel = init
    individual_kernels = [init] * centered.count

    trace: list[float] = []
    mean_post = e_step(centered, mean_kernel, individual_kernels)
    for it in range(config.max_iters):
        opt = replace(config.optimizer, seed=derive_seed(config.optimizer.seed, "em", it))
        mean_kernel, individual_kernels = m_step(
            centered, mean_post, mean_kernel, individual_kernels, opt
        )
        mean_post = e_step(centered, mean_kernel, individual_kernels)
        trace.append(float(_elbo(centered, mean_post, mean_kernel, individual_kernels)))
        if len(trace) > 1 and trace[-1] - trace[-2] < config.tol:
            break

    return MagmaModel(
        grid=dataset.grid,
        offset=offset,
        mean_posterior=GpPosterior(dataset.grid, mean_post.mean + offset, mean_post.cov),
        mean_kernel=mean_kernel,
        individual_kernels=individual_kernels,
        em_trace=trace,
        series_ids=[s.id for s in dataset.series],
    )


def _grid_indices(model_grid: TimeGrid, grid: TimeGrid) -> np.ndarray:
    """Map a (sub)grid's points onto indices of the model grid."""
    raw = (grid.points() - model_grid.start) / model_grid.step
    idx = np.rint(raw).astype(int)
    if np.any(np.abs(raw - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= model_grid.n):
        raise ValueError("grid points do not lie on the model grid")
    return idx


def _pooled_kernel(kernels: list[KernelParams]) -> KernelParams:
    """Geometric mean of the per-series kernels, used for a new individual."""
    logs = np.log([[k.variance, k.lengthscale, max(k.noise_var, 1e-12)] for k in kernels])
    v, ell, nv = np.exp(logs.mean(axis=0))
    periods = [k.period for k in kernels]
    period = float(np.exp(np.mean(np.log(periods)))) if all(p is not None for p in periods) else None
    return KernelParams(variance=v, lengthscale=ell, noise_var=nv, period=period)


def _condition_new_individual(
    model: MagmaModel,
    params: KernelParams,
    observed: TimeSeries | None,
    query: TimeGrid,
) -> GpPosterior:
    """Condition a new individual's GP (prior = shared-mean posterior plus its
    own kernel) on an observed prefix."""
    q_ix = _grid_indices(model.grid, query)
    pts = model.grid.points()
    mean = model.mean_posterior.mean
    mcov = model.mean_posterior.cov
    if observed is None or observed.grid.n == 0:
        cov = kernel_matrix(params, pts[q_ix], pts[q_ix]) + mcov[np.ix_(q_ix, q_ix)]
        return GpPosterior(query, mean[q_ix], 0.5 * (cov + cov.T))
    o_ix = _grid_indices(model.grid, observed.grid)
    cov_oo = kernel_matrix(params, pts[o_ix], pts[o_ix]) + mcov[np.ix_(o_ix, o_ix)]
    cov_qo = kernel_matrix(params, pts[q_ix], pts[o_ix]) + mcov[np.ix_(q_ix, o_ix)]
    cov_qq = kernel_matrix(params, pts[q_ix], pts[q_ix]) + mcov[np.ix_(q_ix, q_ix)]
    post_mean, post_cov = condition_gaussian(
        mean[o_ix], mean[q_ix], cov_oo, cov_qo, cov_qq, observed.values, params.noise_var
    )
    return GpPosterior(query, post_mean, post_cov)


def predict_magma(
    model: MagmaModel,
    observed: TimeSeries | None,
    query: TimeGrid,
    opt: OptimizerConfig | None = None,
) -> GpPosterior:
    """Forecast a new individual from an observed prefix (or from nothing).

    The new individual's kernel hyperparameters are estimated from its own
    observed points (prior mean = shared-mean posterior), initialized at the
    geometric mean of the trained per-series kernels; with no observations
    the prediction falls back to the shared-mean posterior.
    """
    params = _pooled_kernel(model.individual_kernels)
    if observed is not None and observed.grid.n >= 2:
        o_ix = _grid_indices(model.grid, observed.grid)
        prefix_mean = model.mean_posterior.mean[o_ix]
        opt = opt or OptimizerConfig(restarts=2, max_iter=60)
        params = fit_hyperparams(observed, prefix_mean, params, opt)
    return _condition_new_individual(model, params, observed, query)


def posterior_for_individual(model: MagmaModel, index: int, ts: TimeSeries, query: TimeGrid) -> GpPosterior:
    """Posterior of training individual `index` given its own observations."""
    return _condition_new_individual(model, model.individual_kernels[index], ts, query)


def build_sample_bank(model: MagmaModel, train: Dataset, seed: int) -> SampleBank:
    """Draw one posterior sample path per training individual on the full grid."""
    paths = []
    for k, ts in enumerate(train.series):
        post = posterior_for_individual(model, k, ts, model.grid)
        paths.append(sample_paths(post, 1, derive_seed(seed, "bank-path", k))[0])
    noise = math.sqrt(
        float(np.exp(np.mean(np.log([max(p.noise_var, 1e-12) for p in model.individual_kernels]))))
    )
    return SampleBank(grid=model.grid, paths=np.stack(paths), source_noise_std=noise)


# --- serialization ---------------------------------------------------------


def _params_to_dict(p: KernelParams) -> dict:
    return {"variance": p.variance, "lengthscale": p.lengthscale,
            "period": p.period, "noise_var": p.noise_var}


def save_magma(model: MagmaModel, path) -> None:
    doc = {
        "grid": {"start": model.grid.start, "step": model.grid.step, "n": model.grid.n},
        "offset": model.offset,
        "mean": model.mean_posterior.mean.tolist(),
        "cov": model.mean_posterior.cov.tolist(),
        "mean_kernel": _params_to_dict(model.mean_kernel),
        "individual_kernels": [_params_to_dict(p) for p in model.individual_kernels],
        "em_trace": model.em_trace,
        "series_ids": model.series_ids,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_magma(path) -> MagmaModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    grid = TimeGrid(doc["grid"]["start"], doc["grid"]["step"], doc["grid"]["n"])
    return MagmaModel(
        grid=grid,
        offset=doc["offset"],
        mean_posterior=GpPosterior(grid, np.array(doc["mean"]), np.array(doc["cov"])),
        mean_kernel=KernelParams(**doc["mean_kernel"]),
        individual_kernels=[KernelParams(**d) for d in doc["individual_kernels"]],
        em_trace=list(doc["em_trace"]),
        series_ids=list(doc["series_ids"]),
    )
