"""Unified space-time threshold and moment-type tail estimators.

One threshold, the (k+1)-th largest value of the whole pooled panel, is
shared by every station and day. The extreme value index and the global
scale then follow the moment estimator applied to the pooled log-excesses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import pooled_values


class DegenerateSampleError(ValueError):
    """All log-excesses are equal (or there are none), so the moments carry no shape information."""


@dataclass(frozen=True)
class TailFit:
    k: int
    threshold: float
    m1: float
    m2: float
    gamma_hat: float
    scale_hat: float
    exceedance_count: int
    n_total: int

    @property
    def location_hat(self) -> float:
        return self.threshold

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "threshold": self.threshold,
            "m1": self.m1,
            "m2": self.m2,
            "gamma_hat": self.gamma_hat,
            "scale_hat": self.scale_hat,
            "location_hat": self.location_hat,
            "exceedance_count": self.exceedance_count,
            "n_total": self.n_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TailFit":
        return cls(
            k=int(d["k"]),
            threshold=float(d["threshold"]),
            m1=float(d["m1"]),
            m2=float(d["m2"]),
            gamma_hat=float(d["gamma_hat"]),
            scale_hat=float(d["scale_hat"]),
            exceedance_count=int(d["exceedance_count"]),
            n_total=int(d["n_total"]),
        )


def global_threshold(values, k: int) -> float:
    """(k+1)-th largest non-missing value of the pooled sample.

    Uses ``np.partition`` (introselect), so the cost is linear on average.
    """
    x = pooled_values(values)
    n = x.size
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N = {n}, got {k}")
    return float(np.partition(x, n - k - 1)[n - k - 1])


def log_moments(values, threshold: float, k: int) -> tuple[float, float, int]:
    """First two moments of log-excesses over ``threshold``, divided by ``k``.

    Only strict exceedances contribute. Returns ``(m1, m2, count)``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    x = pooled_values(values)
    exc = x[x > threshold]
    if exc.size == 0:
        return 0.0, 0.0, 0
    logs = np.log(exc) - np.log(threshold)
    return float(logs.sum() / k), float((logs * logs).sum() / k), int(exc.size)


def _shape_term(m1: float, m2: float) -> float:
    if not m2 > 0:
        raise DegenerateSampleError("second log-moment is zero")
    ratio = m1 * m1 / m2
    if ratio >= 1.0:
        raise DegenerateSampleError("all log-excesses are equal")
    return 1.0 - ratio


def fit_gamma(m1: float, m2: float) -> float:
    """Moment estimator of the extreme value index."""
    return m1 + 1.0 - 0.5 / _shape_term(m1, m2)


def fit_scale(threshold: float, m1: float, m2: float) -> float:
    """Moment estimator of the scale at the threshold."""
    return threshold * 0.5 * m1 / _shape_term(m1, m2)


def fit_tail(values, k: int) -> TailFit:
    x = pooled_values(values)
    thr = global_threshold(x, k)
    if not thr > 0:
        raise DegenerateSampleError(
            f"threshold {thr} is not positive; k={k} reaches into zero values"
        )
    m1, m2, count = log_moments(x, thr, k)
    return TailFit(
        k=k,
        threshold=thr,
        m1=m1,
        m2=m2,
        gamma_hat=fit_gamma(m1, m2),
        scale_hat=fit_scale(thr, m1, m2),
        exceedance_count=count,
        n_total=int(x.size),
    )


def gamma_trace(values, ks) -> np.ndarray:
    """Estimates over a range of k for graphical threshold choice.

    Returns a structured array with fields k, threshold, gamma_hat, scale_hat;
    degenerate k values are reported as NaN.
    """
    x = np.sort(pooled_values(values))[::-1]
    out = np.zeros(len(ks), dtype=[("k", int), ("threshold", float),
                                   ("gamma_hat", float), ("scale_hat", float)])
    for row, k in zip(out, ks):
        row["k"] = k
        if not 1 <= k < x.size or not x[k] > 0:
            row["threshold"] = row["gamma_hat"] = row["scale_hat"] = np.nan
            continue
        thr = x[k]
        head = x[:k]
        logs = np.log(head[head > thr]) - np.log(thr)
        m1, m2 = logs.sum() / k, (logs * logs).sum() / k
        row["threshold"] = thr
        try:
            row["gamma_hat"] = fit_gamma(m1, m2)
            row["scale_hat"] = fit_scale(thr, m1, m2)
        except DegenerateSampleError:
            row["gamma_hat"] = row["scale_hat"] = np.nan
    return out


class TailEstimator(BaseEstimator):
    """Pooled moment estimator of the extreme value index and scale.

    Parameters
    ----------
    k : int
        Number of top order statistics of the pooled panel.

    Attributes
    ----------
    fit_ : TailFit
    threshold_, gamma_, scale_ : float
    """

    def __init__(self, k: int = 3000):
        self.k = k

    def fit(self, X, y=None):
        self.fit_ = fit_tail(X, self.k)
        self.threshold_ = self.fit_.threshold
        self.gamma_ = self.fit_.gamma_hat
        self.scale_ = self.fit_.scale_hat
        return self

    def exceedance_mask(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = np.asarray(X.values if hasattr(X, "values") else X, dtype=float)
        return np.greater(X, self.threshold_, where=~np.isnan(X), out=np.zeros(X.shape, bool))
