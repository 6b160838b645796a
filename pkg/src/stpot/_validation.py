"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def as_value_matrix(X) -> np.ndarray:
    """Panel or array-like -> float array with NaN for missing cells."""
    if hasattr(X, "values") and hasattr(X, "stations"):
        X = X.values
    return check_array(
        X, ensure_all_finite="allow-nan", ensure_2d=False, dtype=float,
        ensure_min_samples=1, copy=False,
    )


def pooled_values(X) -> np.ndarray:
    """All non-missing observations of a panel as a flat array."""
    arr = as_value_matrix(X).ravel()
    return arr[~np.isnan(arr)]


def check_bandwidth(h: float) -> float:
    h = float(h)
    if not 0.0 < h <= 0.5:
        raise ValueError(f"bandwidth must lie in (0, 0.5], got {h}")
    return h
