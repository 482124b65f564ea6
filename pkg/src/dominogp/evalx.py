"""Evaluation harness: hold-out and cross-validation studies, ablation sweeps.

Each study cell generates a synthetic dataset, holds one series out, trains
the shared-mean GP model on the rest, draws one posterior path per training
individual into a sample bank, trains the walk, and forecasts the hold-out
suffix from its observed prefix with both methods. Results carry per-run
errors so the reported mean/std are always recomputable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domino import DominoConfig, forecast, train_domino
from .magma import EmConfig, build_sample_bank, fit_magma, predict_magma
from .gp import OptimizerConfig
from .metrics import mae
from .seeding import derive_seed
from .series import SyntheticSpec, generate_synthetic, make_grid, split_holdout, split_query

__all__ = [
    "StudyConfig",
    "RunRow",
    "SummaryRow",
    "StudyResult",
    "DEFAULT_ABLATION_GRIDS",
    "run_length_study",
    "run_cv_study",
    "run_ablation",
]

# Sweep grids for the hyperparameter ablations.
DEFAULT_ABLATION_GRIDS: dict[str, tuple] = {
    "max_epochs": (5, 10, 15, 20, 25, 30),
    "delta": (0.01, 0.02, 0.03, 0.05, 0.10),
    "outlier_fraction": (0.01, 0.02, 0.03, 0.05, 0.10),
    "lambda": (0.5, 1.0, 1.5),
}

_DEFAULT_SYNTH = SyntheticSpec(
    trend_slope=0.05,
    trend_intercept=10.0,
    periodic_components=((4.0, 20.0, 0.0), (1.5, 7.0, 0.8)),
    noise_std=0.25,
    amp_jitter=0.1,
    phase_jitter=0.2,
)

# Frugal EM budget used by the studies (the point of the pipeline is cheap
# training); standalone fits default to the heavier EmConfig.
_STUDY_EM = EmConfig(
    max_iters=3,
    tol=1e-4,
    optimizer=OptimizerConfig(restarts=1, max_iter=60),
)


@dataclass(frozen=True)
class StudyConfig:
    lengths: tuple[int, ...] = (50, 100, 150, 200, 250)
    runs: int = 10
    series_count: int = 10
    prefix_fraction: float = 0.5
    base_seed: int = 0
    grid_start: float = 0.0
    grid_step: float = 1.0
    synth: SyntheticSpec = _DEFAULT_SYNTH
    em: EmConfig = _STUDY_EM
    domino: DominoConfig = field(default_factory=DominoConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(n < 4 for n in self.lengths):
            raise ValueError("every length must be >= 4")
        if not 0 < self.prefix_fraction < 1:
            raise ValueError("prefix_fraction must be in (0, 1)")
        if self.series_count < 3:
            raise ValueError("series_count must be >= 3 (hold-out keeps >= 2)")


@dataclass(frozen=True)
class RunRow:
    length: int
    method: str
    run: int
    fold: int
    mae: float


@dataclass(frozen=True)
class SummaryRow:
    length: int
    method: str
    mean_mae: float
    std_mae: float
    n: int
    single_run: bool


@dataclass
class StudyResult:
    rows: list[RunRow]

    def summary(self) -> list[SummaryRow]:
        groups: dict[tuple[int, str], list[float]] = {}
        for row in self.rows:
            groups.setdefault((row.length, row.method), []).append(row.mae)
        out = []
        for (length, method), vals in sorted(groups.items()):
            n = len(vals)
            std = float(np.std(vals, ddof=1)) if n > 1 else 0.0
            out.append(SummaryRow(length, method, float(np.mean(vals)), std, n, n == 1))
        return out

    def to_csv(self) -> str:
        lines = ["length,method,run,fold,mae"]
        for r in self.rows:
            lines.append(f"{r.length},{r.method},{r.run},{r.fold},{r.mae!r}")
        return "\n".join(lines) + "\n"

    def summary_to_csv(self) -> str:
        lines = ["length,method,mean_mae,std_mae"]
        for r in self.summary():
            lines.append(f"{r.length},{r.method},{r.mean_mae!r},{r.std_mae!r}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        """Aligned table with 'mean (std)' cells, one row per length."""
        summary = self.summary()
        methods = sorted({r.method for r in summary})
        lengths = sorted({r.length for r in summary})
        cells = {(r.length, r.method): f"{r.mean_mae:.3f} ({r.std_mae:.3f})" for r in summary}
        header = ["Length"] + methods
        rows = [[str(n)] + [cells.get((n, m), "-") for m in methods] for n in lengths]
        widths = [max(len(h), *(len(r[k]) for r in rows)) for k, h in enumerate(header)]
        fmt = lambda row: "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"
        sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        return "\n".join([fmt(header), sep] + [fmt(r) for r in rows]) + "\n"


def _run_cell(config: StudyConfig, length: int, run: int, fold: int) -> tuple[float, float]:
    """One (length, run, fold) cell; returns (magma_mae, domino_mae)."""
    grid = make_grid(config.grid_start, config.grid_step, length)
    spec = replace(config.synth, seed=derive_seed(config.base_seed, "data", length, run))
    dataset = generate_synthetic(spec, grid, config.series_count)
    train, holdout = split_holdout(dataset, fold)

    model = fit_magma(train, config.em)
    bank = build_sample_bank(model, train, derive_seed(config.base_seed, "bank", length, run, fold))
    dmodel = train_domino(
        bank, config.domino, derive_seed(config.base_seed, "walk", length, run, fold)
    )

    m = min(max(1, int(math.floor(length * config.prefix_fraction))), length - 1)
    observed, target = split_query(holdout, m)

    magma_pred = predict_magma(model, observed, grid).mean[m:]
    domino_pred = forecast(
        dmodel, observed, derive_seed(config.base_seed, "forecast", length, run, fold)
    )[m:]
    return mae(target.values, magma_pred), mae(target.values, domino_pred)


def run_length_study(config: StudyConfig | None = None) -> StudyResult:
    """Hold-out study across series lengths; one fold per run."""
    config = config or StudyConfig()
    rows = []
    for length in config.lengths:
        for run in range(config.runs):
            fold = run % config.series_count
            magma_err, domino_err = _run_cell(config, length, run, fold)
            rows.append(RunRow(length, "magma", run, fold, magma_err))
            rows.append(RunRow(length, "domino", run, fold, domino_err))
    return StudyResult(rows)


def run_cv_study(config: StudyConfig | None = None) -> StudyResult:
    """Leave-one-series-out across all individuals for each run."""
    config = config or StudyConfig()
    rows = []
    for length in config.lengths:
        for run in range(config.runs):
            for fold in range(config.series_count):
                magma_err, domino_err = _run_cell(config, length, run, fold)
                rows.append(RunRow(length, "magma", run, fold, magma_err))
                rows.append(RunRow(length, "domino", run, fold, domino_err))
    return StudyResult(rows)


def run_ablation(hp: str, values, config: StudyConfig | None = None) -> StudyResult:
    """Sweep one walk hyperparameter over `values`, all others at defaults."""
    config = config or StudyConfig()
    field_names = {
        "max_epochs": "max_epochs",
        "delta": "delta_fraction",
        "outlier_fraction": "outlier_fraction",
        "lambda": "lam",
    }
    if hp not in field_names:
        raise ValueError(f"unknown hyperparameter {hp!r}; choose from {sorted(field_names)}")
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    rows = []
    for value in values:
        swept = replace(config, domino=replace(config.domino, **{field_names[hp]: value}))
        result = run_length_study(swept)
        for r in result.rows:
            if r.method == "domino":
                rows.append(RunRow(r.length, f"domino[{hp}={value}]", r.run, r.fold, r.mae))
    return StudyResult(rows)
