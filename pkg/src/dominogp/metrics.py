"""Forecast error metrics."""

from __future__ import annotations

import numpy as np

__all__ = ["mae"]


def mae(y: np.ndarray, yhat: np.ndarray) -> float:
    """Median absolute error: median(|y - yhat|), robust to outliers.

    For even lengths this is the mean of the two central order statistics.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError(f"inputs must be equal-length vectors, got {y.shape} and {yhat.shape}")
    if y.size == 0:
        raise ValueError("inputs must be non-empty")
    return float(np.median(np.abs(y - yhat)))
