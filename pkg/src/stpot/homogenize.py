"""Map threshold exceedances to pseudo-observations of a stationary process.

For an exceedance X at time i/n and station j, with c = c_hat(i/n, s_j),

    Z = c^(-gamma) X - a (1 - c^(-gamma)) / gamma * (1 - gamma U / a)

where gamma, a and U are the pooled shape, scale and threshold. Only the
exceedances are transformed; values below the threshold are left out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_value_matrix
from .scedasis import ScedasisEstimate, ScedasisEstimator
from .tail import TailFit

GAMMA_ZERO = 1e-8


class TrendSupportError(ValueError):
    """The scedasis estimate vanishes at an exceedance."""


def homogenize_values(x, c, gamma: float, scale: float, location: float):
    """Vectorized transform of exceedances ``x`` with scedasis values ``c``."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if abs(gamma) < GAMMA_ZERO:
        return x - scale * np.log(c)
    cg = c ** (-gamma)
    return cg * x - scale * (1.0 - cg) / gamma * (1.0 - gamma * location / scale)


@dataclass(frozen=True, eq=False)
class HomogenizedSample:
    day: np.ndarray      # 0-based panel row
    station: np.ndarray  # 0-based station column
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    tailfit: TailFit
    n_days: int
    n_stations: int

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.station, minlength=self.n_stations)

    def __len__(self) -> int:
        return len(self.z)

    def station_values(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``(days, z)`` of the records at station ``j``."""
        sel = self.station == j
        return self.day[sel], self.z[sel]

    def dense(self) -> np.ndarray:
        """n x m matrix of Z with NaN where the cell did not exceed."""
        out = np.full((self.n_days, self.n_stations), np.nan)
        out[self.day, self.station] = self.z
        return out


def homogenize(panel, tailfit: TailFit, scedasis: ScedasisEstimate) -> HomogenizedSample:
    values = as_value_matrix(panel)
    n, m = values.shape
    exceed = np.greater(values, tailfit.threshold, where=~np.isnan(values),
                        out=np.zeros(values.shape, bool))
    day, station = np.nonzero(exceed)
    t = (day + 1) / n
    x = values[day, station]
    c = np.empty(t.size)
    for j in np.unique(station):
        sel = station == j
        c[sel] = np.interp(t[sel], scedasis.t_grid, scedasis.c_hat[:, j])
    bad = np.flatnonzero(~(c > 0))
    if bad.size:
        i, j = day[bad[0]], station[bad[0]]
        raise TrendSupportError(
            f"scedasis estimate is zero at exceedance (day {i}, station {j}); increase the bandwidth"
        )
    z = homogenize_values(x, c, tailfit.gamma_hat, tailfit.scale_hat, tailfit.location_hat)
    return HomogenizedSample(day, station, t, x, z, tailfit, n, m)


def boxplot_summary(panel, sample: HomogenizedSample) -> list[dict]:
    """Per-station quantiles of observed nonzero values, exceedances and their Z."""
    values = as_value_matrix(panel)
    probs = (0.0, 0.25, 0.5, 0.75, 1.0)
    rows = []
    for j in range(values.shape[1]):
        col = values[:, j]
        obs = col[(~np.isnan(col)) & (col > 0)]
        sel = sample.station == j
        for label, data in (("observed", obs), ("exceedance", sample.x[sel]),
                            ("homogenized", sample.z[sel])):
            qs = np.quantile(data, probs) if data.size else np.full(len(probs), np.nan)
            rows.append({"station": j, "series": label, "count": int(data.size),
                         **{f"q{int(p * 100):02d}": float(q) for p, q in zip(probs, qs)}})
    return rows


class Homogenizer(TransformerMixin, BaseEstimator):
    """Fit tail and scedasis on a panel; ``transform`` homogenizes its exceedances."""

    def __init__(self, k: int = 3000, bandwidth: float = 0.1, grid_points: int = 201):
        self.k = k
        self.bandwidth = bandwidth
        self.grid_points = grid_points

    def fit(self, X, y=None):
        self.scedasis_ = ScedasisEstimator(self.k, self.bandwidth, self.grid_points).fit(X)
        self.tail_ = self.scedasis_.tail_
        return self

    def transform(self, X) -> HomogenizedSample:
        check_is_fitted(self)
        return homogenize(X, self.tail_, self.scedasis_.estimate_)
