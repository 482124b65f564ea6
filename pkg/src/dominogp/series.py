"""Regular-grid time series: data model, synthetic generation, splits, CSV I/O.

All series in a dataset share one :class:`TimeGrid`. The synthetic generator
produces related-but-distinct individuals as trend + sum of sinusoids +
Gaussian noise, with small per-series perturbations of the sinusoid
amplitudes and phases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CsvFormatError

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "Dataset",
    "SyntheticSpec",
    "make_grid",
    "generate_synthetic",
    "split_holdout",
    "split_query",
    "write_dataset_csv",
    "read_dataset_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Evenly spaced time coordinates: point(k) = start + k*step, k in [0, n)."""

    start: float
    step: float
    n: int

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.n}")

    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n, dtype=float)

    def point(self, k: int) -> float:
        return self.start + k * self.step

    @property
    def span(self) -> float:
        return self.step * (self.n - 1)

    def prefix(self, m: int) -> "TimeGrid":
        return TimeGrid(self.start, self.step, m)

    def suffix(self, m: int) -> "TimeGrid":
        return TimeGrid(self.start + m * self.step, self.step, self.n - m)


@dataclass
class TimeSeries:
    """Observations of one individual on a regular grid."""

    id: int
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"series {self.id}: expected {self.grid.n} values, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.id}: values must be finite")

    def __len__(self) -> int:
        return self.grid.n


@dataclass
class Dataset:
    """A collection of series sharing one grid."""

    series: list[TimeSeries]

    def __post_init__(self):
        if len(self.series) < 2:
            raise ValueError("a dataset needs at least 2 series")
        g = self.series[0].grid
        for s in self.series[1:]:
            if s.grid != g:
                raise ValueError("all series in a dataset must share the same grid")

    @property
    def count(self) -> int:
        return len(self.series)

    @property
    def grid(self) -> TimeGrid:
        return self.series[0].grid

    def values_matrix(self) -> np.ndarray:
        """Stack all series values into an (I, N) matrix."""
        return np.stack([s.values for s in self.series])


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for related synthetic individuals.

    Each individual i gets
        y_i(t) = intercept + slope*t
                 + sum_c amp_c,i * sin(2*pi*t/period_c + phase_c,i)
                 + eps,   eps ~ N(0, noise_std^2)
    where amp_c,i multiplies the base amplitude by (1 + N(0, amp_jitter))
    and phase_c,i shifts the base phase uniformly in +-phase_jitter radians.
    """

    trend_slope: float = 0.0
    trend_intercept: float = 0.0
    periodic_components: tuple[tuple[float, float, float], ...] = ()
    noise_std: float = 0.0
    amp_jitter: float = 0.1
    phase_jitter: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "periodic_components", tuple(tuple(c) for c in self.periodic_components)
        )
        for amp, period, phase in self.periodic_components:
            if period <= 0:
                raise ValueError(f"periodic component period must be positive, got {period}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.amp_jitter < 0 or self.phase_jitter < 0:
            raise ValueError("jitter magnitudes must be nonnegative")


def make_grid(start: float, step: float, n: int) -> TimeGrid:
    """Build a grid of n points spaced by step, starting at start."""
    return TimeGrid(float(start), float(step), int(n))


def generate_synthetic(spec: SyntheticSpec, grid: TimeGrid, count: int) -> Dataset:
    """Generate `count` related series on `grid`, deterministically from spec.seed."""
    if count < 2:
        raise ValueError(f"need at least 2 series, got {count}")
    rng = np.random.default_rng(spec.seed)
    t = grid.points()
    out = []
    for i in range(count):
        y = spec.trend_intercept + spec.trend_slope * t
        for amp, period, phase in spec.periodic_components:
            a_i = amp * (1.0 + rng.normal(0.0, spec.amp_jitter))
            p_i = phase + rng.uniform(-spec.phase_jitter, spec.phase_jitter)
            y = y + a_i * np.sin(2.0 * np.pi * t / period + p_i)
        y = y + spec.noise_std * rng.standard_normal(grid.n)
        out.append(TimeSeries(id=i, grid=grid, values=y))
    return Dataset(out)


def split_holdout(dataset: Dataset, hold: int) -> tuple[Dataset, TimeSeries]:
    """Remove one series for evaluation; the rest stay for training."""
    if not 0 <= hold < dataset.count:
        raise ValueError(f"hold index {hold} out of range for {dataset.count} series")
    if dataset.count < 3:
        raise ValueError("need at least 3 series so training keeps >= 2")
    train = Dataset([s for k, s in enumerate(dataset.series) if k != hold])
    return train, dataset.series[hold]


def split_query(series: TimeSeries, m: int) -> tuple[TimeSeries, TimeSeries]:
    """Split into the observed first m points and the remaining target points."""
    n = series.grid.n
    if not 1 <= m < n:
        raise ValueError(f"prefix length must satisfy 1 <= m < {n}, got {m}")
    observed = TimeSeries(series.id, series.grid.prefix(m), series.values[:m].copy())
    target = TimeSeries(series.id, series.grid.suffix(m), series.values[m:].copy())
    return observed, target


def write_dataset_csv(dataset: Dataset, path) -> int:
    """Write `series_id,t,y` rows sorted by (series_id, t). Returns the row count."""
    t = dataset.grid.points()
    n_rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series_id", "t", "y"])
        for s in dataset.series:
            for tk, yk in zip(t, s.values):
                writer.writerow([s.id, repr(float(tk)), repr(float(yk))])
                n_rows += 1
    return n_rows


def read_dataset_csv(path) -> Dataset:
    """Read a dataset written by :func:`write_dataset_csv`.

    The grid is inferred from the time column and must be regular and shared
    across all series; malformed rows raise :class:`CsvFormatError` with the
    offending line number.
    """
    by_id: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["series_id", "t", "y"]:
            raise CsvFormatError("expected header 'series_id,t,y'", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CsvFormatError(f"expected 3 fields, got {len(row)}", line=line_no)
            try:
                sid = int(row[0])
                t = float(row[1])
                y = float(row[2])
            except ValueError as exc:
                raise CsvFormatError(str(exc), line=line_no) from exc
            by_id.setdefault(sid, []).append((t, y))
    if not by_id:
        raise CsvFormatError("no data rows", line=2)

    grid = None
    out = []
    for sid in sorted(by_id):
        rows = sorted(by_id[sid])
        t = np.array([r[0] for r in rows])
        y = np.array([r[1] for r in rows])
        if len(t) < 2:
            raise ValueError(f"series {sid} has fewer than 2 points")
        steps = np.diff(t)
        step = float(np.median(steps))
        if step <= 0 or not np.allclose(steps, step, rtol=0, atol=1e-9 * max(1.0, abs(step))):
            raise ValueError(f"series {sid} is not on a regular grid")
        g = TimeGrid(float(t[0]), step, len(t))
        if grid is None:
            grid = g
        elif (
            abs(g.start - grid.start) > 1e-9
            or abs(g.step - grid.step) > 1e-9
            or g.n != grid.n
        ):
            raise ValueError(f"series {sid} grid differs from the shared grid")
        out.append(TimeSeries(id=sid, grid=grid, values=y))
    return Dataset(out)
