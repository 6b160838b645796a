"""Kernel estimation of the scedasis c(t, s_j) and its integral C_j(t)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_value_matrix, check_bandwidth
from .tail import TailFit, fit_tail


@dataclass(frozen=True, eq=False)
class ExceedanceProcess:
    """Exceedance times i/n of the unified threshold, one sorted array per station."""

    fractions: tuple
    n: int
    k: int

    @property
    def m(self) -> int:
        return len(self.fractions)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(f) for f in self.fractions])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class ScedasisEstimate:
    t_grid: np.ndarray
    c_hat: np.ndarray  # (grid points, m)
    bandwidth: float
    kernel: str = "biweight"

    def at(self, t, station: int | None = None) -> np.ndarray:
        """Linear interpolation of the gridded estimate at times ``t``."""
        t = np.asarray(t, dtype=float)
        if station is not None:
            return np.interp(t, self.t_grid, self.c_hat[:, station])
        return np.column_stack(
            [np.interp(t, self.t_grid, self.c_hat[:, j]) for j in range(self.c_hat.shape[1])]
        )

    def integral(self) -> np.ndarray:
        """Trapezoidal integral over [0, 1] per station."""
        dt = np.diff(self.t_grid)[:, None]
        return (0.5 * (self.c_hat[1:] + self.c_hat[:-1]) * dt).sum(axis=0)


def exceedance_times(panel, tailfit: TailFit) -> ExceedanceProcess:
    values = as_value_matrix(panel)
    n = values.shape[0]
    exceed = np.greater(values, tailfit.threshold, where=~np.isnan(values),
                        out=np.zeros(values.shape, bool))
    fractions = tuple(
        (np.flatnonzero(exceed[:, j]) + 1) / n for j in range(values.shape[1])
    )
    return ExceedanceProcess(fractions, n, tailfit.k)


def biweight_kernel(x):
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= 1.0, 0.9375 * (1.0 - x * x) ** 2, 0.0)
    return float(out) if out.ndim == 0 else out


def biweight_cdf(x):
    """Integral of the biweight kernel from -1 to x."""
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return 0.5 + 0.9375 * (x - 2.0 * x ** 3 / 3.0 + x ** 5 / 5.0)


def boundary_weight(t, h: float):
    """Kernel mass that stays inside [0, 1] when smoothing at ``t``."""
    t = np.asarray(t, dtype=float)
    lo = np.maximum(-1.0, (t - 1.0) / h)
    hi = np.minimum(1.0, t / h)
    return biweight_cdf(hi) - biweight_cdf(lo)


def default_grid(points: int = 201) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def estimate_c(exc: ExceedanceProcess, h: float = 0.1, t_grid=None) -> ScedasisEstimate:
    """Boundary-renormalized biweight kernel estimate of c(t, s_j)."""
    h = check_bandwidth(h)
    if exc.k * h < 10:
        warnings.warn(f"k*h = {exc.k * h:.3g} < 10; the scedasis estimate will be noisy",
                      stacklevel=2)
    t = default_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    w = boundary_weight(t, h)
    c = np.zeros((t.size, exc.m))
    for j, u in enumerate(exc.fractions):
        if len(u):
            c[:, j] = biweight_kernel((t[:, None] - u[None, :]) / h).sum(axis=1)
    c /= exc.k * h * w[:, None]
    return ScedasisEstimate(t, c, h)


def estimate_C(exc: ExceedanceProcess, t) -> np.ndarray:
    """Right-continuous step estimate C_j(t) = #{exceedances at j with i/n <= t} / k.

    Returns an array of shape ``(len(t), m)`` (or ``(m,)`` for scalar ``t``).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    # tolerance keeps i/n == t on the right side of the jump despite rounding
    out = np.column_stack(
        [np.searchsorted(u, t_arr + 1e-12, side="right") for u in exc.fractions]
    ) / exc.k
    return out[0] if np.ndim(t) == 0 else out


class ScedasisEstimator(BaseEstimator):
    """Fit the unified threshold and the scedasis of a panel.

    Parameters
    ----------
    k : int
        Number of pooled top order statistics.
    bandwidth : float
        Kernel bandwidth on the [0, 1] time axis.
    grid_points : int
        Number of equispaced evaluation points.

    Attributes
    ----------
    tail_ : TailFit
    exceedances_ : ExceedanceProcess
    estimate_ : ScedasisEstimate
    C1_ : ndarray of shape (m,)
        Integrated scedasis C_j(1).
    """

    def __init__(self, k: int = 3000, bandwidth: float = 0.1, grid_points: int = 201):
        self.k = k
        self.bandwidth = bandwidth
        self.grid_points = grid_points

    def fit(self, X, y=None, tailfit: TailFit | None = None):
        self.tail_ = tailfit if tailfit is not None else fit_tail(X, self.k)
        self.exceedances_ = exceedance_times(X, self.tail_)
        self.estimate_ = estimate_c(self.exceedances_, self.bandwidth,
                                    default_grid(self.grid_points))
        self.C1_ = estimate_C(self.exceedances_, 1.0)
        return self

    def predict(self, t, station: int | None = None) -> np.ndarray:
        check_is_fitted(self)
        return self.estimate_.at(t, station)
