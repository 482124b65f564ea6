"""Weighted random walk over GP sample paths.

Each epoch draws, for every grid point, which sample path to copy the value
from (categorical over softmax-smoothed weights), scores the resulting walk
against every path, and updates the weights multiplicatively from the scores
and the historical visit frequencies. Training stops once the walk is close
to every path, once the few remaining excursions are tightly clustered, or
at the epoch cap. Forecasting replays the walk over the unobserved suffix of
a query series using the final weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateWeights
from .metrics import mae
from .seeding import derive_seed
from .series import TimeGrid, TimeSeries

__all__ = [
    "SampleBank",
    "DominoConfig",
    "EpochRecord",
    "DominoState",
    "StopDecision",
    "DominoModel",
    "init_domino",
    "draw_probabilities",
    "run_walk_epoch",
    "evaluate_performance",
    "update_weights",
    "divergence_profile",
    "DivergenceProfile",
    "check_stop",
    "train_domino",
    "forecast",
    "save_domino",
    "load_domino",
    "save_bank",
    "load_bank",
]


@dataclass
class SampleBank:
    """The sampled paths the walk switches between, on a shared grid."""

    grid: TimeGrid
    paths: np.ndarray  # (I, N)
    source_noise_std: float = 0.0

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=float)
        if self.paths.ndim != 2 or self.paths.shape[1] != self.grid.n:
            raise ValueError(f"paths must be (I, {self.grid.n}), got {self.paths.shape}")
        if self.paths.shape[0] < 2:
            raise ValueError("need at least 2 paths")
        if self.source_noise_std < 0:
            raise ValueError("source_noise_std must be nonnegative")

    @property
    def count(self) -> int:
        return self.paths.shape[0]

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.paths.min()), float(self.paths.max())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.grid.start, self.grid.step, self.grid.n)).encode())
        h.update(np.ascontiguousarray(self.paths).tobytes())
        h.update(repr(self.source_noise_std).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class DominoConfig:
    """Walk hyperparameters. Defaults: 30 epochs, 5% tolerance, 3% outliers, lambda 0.5."""

    max_epochs: int = 30
    delta_fraction: float = 0.05
    outlier_fraction: float = 0.03
    lam: float = 0.5
    # visit penalty normalizer: "walk_length" divides visit counts by N,
    # "series_count" divides by I
    visit_normalizer: str = "walk_length"
    performance_kind: str = "inverse_mae"
    forecast_repeats: int = 50

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 < self.delta_fraction < 1:
            raise ValueError("delta_fraction must be in (0, 1)")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.visit_normalizer not in ("walk_length", "series_count"):
            raise ValueError(f"unknown visit_normalizer {self.visit_normalizer!r}")
        if self.performance_kind != "inverse_mae":
            raise ValueError(f"unknown performance_kind {self.performance_kind!r}")
        if self.forecast_repeats < 1:
            raise ValueError("forecast_repeats must be >= 1")


@dataclass
class EpochRecord:
    """Everything one epoch produced."""

    epoch: int
    walk_values: np.ndarray  # (N,)
    walk_indices: np.ndarray  # (N,) 0-based path indices
    performances: np.ndarray  # (I,)
    mean_performance: float
    weights: np.ndarray  # (I,) simplex


@dataclass
class DominoState:
    bank: SampleBank
    config: DominoConfig
    weights: np.ndarray
    epoch: int = 0
    history: list[EpochRecord] = field(default_factory=list)


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str | None  # all_under_delta | outlier_std_rule | max_epochs


@dataclass
class DominoModel:
    bank: SampleBank
    config: DominoConfig
    final_weights: np.ndarray
    history: list[EpochRecord]
    stop_reason: str


def init_domino(bank: SampleBank, config: DominoConfig) -> DominoState:
    """Fresh state with uniform weights 1/I."""
    if bank.count < 2:
        raise ValueError("need at least 2 paths")
    weights = np.full(bank.count, 1.0 / bank.count)
    return DominoState(bank=bank, config=config, weights=weights)


def draw_probabilities(weights: np.ndarray, lam: float) -> np.ndarray:
    """Softmax-smoothed draw distribution: q_i = exp(lam*w_i) / sum_k exp(lam*w_k)."""
    weights = np.asarray(weights, dtype=float)
    z = lam * weights
    z = z - z.max()  # stability
    q = np.exp(z)
    return q / q.sum()


def _draw_indices(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cumulative-sum inversion over indices in ascending order
    cdf = np.cumsum(q)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(q) - 1)


def run_walk_epoch(state: DominoState, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One pass over the grid: draw a path index per point, copy its value."""
    bank = state.bank
    q = draw_probabilities(state.weights, state.config.lam)
    idx = _draw_indices(q, rng.random(bank.grid.n))
    values = bank.paths[idx, np.arange(bank.grid.n)]
    return values, idx


def evaluate_performance(walk_values: np.ndarray, bank: SampleBank) -> tuple[np.ndarray, float]:
    """Score the walk against each path: M_i = 1/(1 + mae(path_i, walk))."""
    walk_values = np.asarray(walk_values, dtype=float)
    if walk_values.shape != (bank.grid.n,):
        raise ValueError("walk length must match the bank grid")
    perf = np.array([1.0 / (1.0 + mae(p, walk_values)) for p in bank.paths])
    return perf, float(perf.mean())


def update_weights(
    prior_walks: list[np.ndarray], performances: np.ndarray, config: DominoConfig, bank: SampleBank
) -> np.ndarray:
    """Multiplicative update from performances and historical visit counts.

    unnorm_i = exp(sum over completed prior epochs of (1/2 - visits_i/norm)) * M_i,
    normalized to the simplex. With no prior epochs the exponent is empty, so
    the first weights are proportional to the performances alone.
    """
    performances = np.asarray(performances, dtype=float)
    if np.any(performances <= 0):
        raise ValueError("performances must be positive")
    n_series = bank.count
    norm = float(bank.grid.n if config.visit_normalizer == "walk_length" else n_series)
    exponent = np.zeros(n_series)
    for z in prior_walks:
        counts = np.bincount(np.asarray(z, dtype=int), minlength=n_series).astype(float)
        exponent += 0.5 - counts / norm
    unnorm = np.exp(exponent) * performances
    total = unnorm.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateWeights("all unnormalized weights are zero or non-finite")
    return unnorm / total


@dataclass
class DivergenceProfile:
    """Per-series per-point deviations of the walk, with the stop threshold."""

    deviations: np.ndarray  # (I, N) absolute deviations
    threshold: float  # tau = delta_fraction * (max - min) of the bank
    kl: np.ndarray  # Gaussian-KL diagnostic d^2 / (2 sigma^2)
    degenerate_range: bool


def divergence_profile(
    walk_values: np.ndarray, bank: SampleBank, config: DominoConfig
) -> DivergenceProfile:
    """Absolute deviation of the walk from every path, plus the delta threshold."""
    walk_values = np.asarray(walk_values, dtype=float)
    if walk_values.shape != (bank.grid.n,):
        raise ValueError("walk length must match the bank grid")
    dev = np.abs(walk_values[None, :] - bank.paths)
    lo, hi = bank.value_range
    tau = config.delta_fraction * (hi - lo)
    sigma2 = bank.source_noise_std**2
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(dev == 0.0, 0.0, dev**2 / (2.0 * sigma2)) if sigma2 > 0 else np.where(
            dev == 0.0, 0.0, np.inf
        )
    return DivergenceProfile(dev, tau, kl, degenerate_range=(hi == lo))


def check_stop(state: DominoState, config: DominoConfig | None = None) -> StopDecision:
    """Evaluate the three stopping clauses on the latest epoch's walk."""
    config = config or state.config
    if not state.history:
        raise ValueError("check_stop needs at least one completed epoch")
    record = state.history[-1]
    profile = divergence_profile(record.walk_values, state.bank, config)
    dev, tau = profile.deviations, profile.threshold

    if dev.max() <= tau:
        return StopDecision(True, "all_under_delta")

    outliers = dev > tau
    n_out = int(outliers.sum())
    budget = config.outlier_fraction * dev.size
    if 0 < n_out <= budget:
        inliers = ~outliers
        out_std = float(np.std(dev[outliers] - tau))
        in_std = float(np.std(tau - dev[inliers])) if inliers.any() else np.nan
        if np.isfinite(in_std) and out_std < in_std:
            return StopDecision(True, "outlier_std_rule")

    if state.epoch >= config.max_epochs:
        return StopDecision(True, "max_epochs")
    return StopDecision(False, None)


def train_domino(bank: SampleBank, config: DominoConfig, seed: int) -> DominoModel:
    """Run walk epochs until a stopping clause fires; fully seeded."""
    state = init_domino(bank, config)
    rng = np.random.default_rng(seed)
    prior_walks: list[np.ndarray] = []
    reason = "max_epochs"
    for epoch in range(1, config.max_epochs + 1):
        values, idx = run_walk_epoch(state, rng)
        perf, mean_perf = evaluate_performance(values, bank)
        weights = update_weights(prior_walks, perf, config, bank)
        state.history.append(
            EpochRecord(epoch, values, idx, perf, mean_perf, weights)
        )
        state.weights = weights
        state.epoch = epoch
        prior_walks.append(idx)
        decision = check_stop(state, config)
        if decision.stop:
            reason = decision.reason
            break
    return DominoModel(
        bank=bank,
        config=config,
        final_weights=state.weights,
        history=state.history,
        stop_reason=reason,
    )


def forecast(
    model: DominoModel,
    observed: TimeSeries,
    seed: int,
    repeats: int | None = None,
) -> np.ndarray:
    """Forecast a full-length series from its observed prefix.

    The first M points echo the observations verbatim; each later point is
    drawn from the bank columns under the final weights. The walk over the
    suffix is repeated and the pointwise median taken (repeats=1 gives a
    single raw walk).
    """
    bank = model.bank
    grid = bank.grid
    m = observed.grid.n
    if m >= grid.n:
        raise ValueError(f"observed prefix must be shorter than the bank grid ({grid.n})")
    if (
        abs(observed.grid.start - grid.start) > 1e-9 * max(1.0, abs(grid.start))
        or abs(observed.grid.step - grid.step) > 1e-9 * grid.step
    ):
        raise ValueError("observed grid must be the prefix of the bank grid")
    repeats = repeats if repeats is not None else model.config.forecast_repeats
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    q = draw_probabilities(model.final_weights, model.config.lam)
    cols = np.arange(m, grid.n)
    tails = np.empty((repeats, grid.n - m))
    for r in range(repeats):
        rng = np.random.default_rng(derive_seed(seed, "forecast-walk", r))
        idx = _draw_indices(q, rng.random(len(cols)))
        tails[r] = bank.paths[idx, cols]
    out = np.empty(grid.n)
    out[:m] = observed.values
    out[m:] = np.median(tails, axis=0)
    return out


# --- serialization ---------------------------------------------------------


def _grid_to_dict(grid: TimeGrid) -> dict:
    return {"start": grid.start, "step": grid.step, "n": grid.n}


def _grid_from_dict(d: dict) -> TimeGrid:
    return TimeGrid(d["start"], d["step"], d["n"])


def save_bank(bank: SampleBank, path) -> None:
    doc = {
        "grid": _grid_to_dict(bank.grid),
        "paths": bank.paths.tolist(),
        "source_noise_std": bank.source_noise_std,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_bank(path) -> SampleBank:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return SampleBank(
        grid=_grid_from_dict(doc["grid"]),
        paths=np.array(doc["paths"]),
        source_noise_std=doc["source_noise_std"],
    )


def save_domino(model: DominoModel, path) -> None:
    """Serialize the model; walk indices are stored 1-based."""
    doc = {
        "bank_hash": model.bank.content_hash(),
        "config": asdict(model.config),
        "stop_reason": model.stop_reason,
        "final_weights": model.final_weights.tolist(),
        "history": [
            {
                "epoch": r.epoch,
                "walk_values": r.walk_values.tolist(),
                "walk_indices": (r.walk_indices + 1).tolist(),
                "performances": r.performances.tolist(),
                "mean_performance": r.mean_performance,
                "weights": r.weights.tolist(),
            }
            for r in model.history
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_domino(path, bank: SampleBank) -> DominoModel:
    """Load a model; the caller supplies the bank, verified by content hash."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["bank_hash"] != bank.content_hash():
        raise ValueError("bank content hash does not match the serialized model")
    config = DominoConfig(**doc["config"])
    history = [
        EpochRecord(
            epoch=r["epoch"],
            walk_values=np.array(r["walk_values"]),
            walk_indices=np.array(r["walk_indices"], dtype=int) - 1,
            performances=np.array(r["performances"]),
            mean_performance=r["mean_performance"],
            weights=np.array(r["weights"]),
        )
        for r in doc["history"]
    ]
    return DominoModel(
        bank=bank,
        config=config,
        final_weights=np.array(doc["final_weights"]),
        history=history,
        stop_reason=doc["stop_reason"],
    )
