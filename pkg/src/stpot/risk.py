"""Marginal and joint failure probabilities P(X_t(s) > x).

The trend-aware marginal estimate is c_hat(t, s) * (k/N) times the
generalized Pareto tail factor of the homogenized sample above its k/N
level. The joint estimate combines two marginals through the
Huesler-Reiss L function.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import pooled_values
from .dependence import hr_pair_L, variogram_model
from .homogenize import GAMMA_ZERO, HomogenizedSample, Homogenizer, homogenize_values
from .scedasis import ScedasisEstimate
from .tail import TailFit, fit_tail


class FirstOrderApproximationWarning(UserWarning):
    """The joint formula left [0, min(p_i, p_j)] and was clamped."""


def tail_factor(excess, gamma: float, scale: float):
    """(1 + gamma * excess / scale) ** (-1 / gamma), zero beyond a finite endpoint."""
    e = np.asarray(excess, dtype=float)
    if abs(gamma) < GAMMA_ZERO:
        out = np.exp(-e / scale)
    else:
        base = 1.0 + gamma * e / scale
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(base > 0, np.abs(base) ** (-1.0 / gamma),
                           0.0 if gamma < 0 else np.inf)
    return float(out) if out.ndim == 0 else out


def iid_failure_prob(x_n: float, k: int, series) -> float:
    """Classical estimate (k/n)(1 + gamma (x_n - Y_{n-k,n}) / sigma)^(-1/gamma).

    Shape and scale are the moment estimators on the single series.
    """
    y = pooled_values(series)
    n = y.size
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n = {n}")
    fit = fit_tail(y, k)
    p = k / n * tail_factor(x_n - fit.threshold, fit.gamma_hat, fit.scale_hat)
    return float(min(1.0, max(0.0, p)))


THRESHOLD_RULES = ("calibrated", "order_statistic")
CANCELLATION_RTOL = 1e-12


def homogenized_threshold(sample: HomogenizedSample, k: int | None = None) -> float:
    """k-th largest pooled homogenized value."""
    k = sample.tailfit.k if k is None else k
    if len(sample) == 0:
        raise ValueError("empty homogenized sample")
    if len(sample) < k:
        warnings.warn(f"only {len(sample)} homogenized records for k={k}; using the smallest",
                      stacklevel=2)
        return float(sample.z.min())
    return float(np.partition(sample.z, len(sample) - k)[len(sample) - k])


def homogenized_level(tailfit: TailFit, m: int, sample: HomogenizedSample | None = None,
                      rule: str = "calibrated") -> tuple[float, float]:
    """Location and scale of the homogenized tail used by the marginal estimate.

    ``calibrated`` maps the unified threshold through the homogenization at
    the average scedasis 1/m, which is where the homogenized survival equals
    k/N, and moves the scale to that level (a m^gamma). ``order_statistic``
    takes the k-th largest homogenized record and the pooled scale as is;
    on a truncated sample with a trend that record lies below the k/N level.
    """
    if rule == "calibrated":
        g, a, u = tailfit.gamma_hat, tailfit.scale_hat, tailfit.threshold
        z = float(homogenize_values(u, 1.0 / m, g, a, u))
        return z, a * m ** g
    if rule == "order_statistic":
        if sample is None:
            raise ValueError("order_statistic rule needs the homogenized sample")
        return homogenized_threshold(sample, tailfit.k), tailfit.scale_hat
    raise ValueError(f"rule must be one of {THRESHOLD_RULES}")


def marginal_failure_prob(t, station: int, x_n: float, tailfit: TailFit,
                          scedasis: ScedasisEstimate, sample: HomogenizedSample,
                          rule: str = "calibrated"):
    """c_hat(t, s) (k/N) (1 + gamma (x_n - z_k) / a)^(-1/gamma), clamped to [0, 1].

    ``z_k`` and ``a`` come from :func:`homogenized_level`.
    """
    c = scedasis.at(t, station)
    if np.any(c <= 0):
        warnings.warn("scedasis estimate is zero; failure probability set to 0", stacklevel=2)
    zk, a = homogenized_level(tailfit, sample.n_stations, sample, rule)
    factor = tail_factor(x_n - zk, tailfit.gamma_hat, a)
    with np.errstate(invalid="ignore"):
        p = np.where(c > 0, c * tailfit.k / tailfit.n_total * factor, 0.0)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def joint_failure_prob(p_i, p_j, k: int, N: int, v: float | None = None,
                       l_hat: float | None = None):
    """p_i + p_j - (k/N) L(1 / ((N/k) p_i), 1 / ((N/k) p_j)), clamped to [0, min(p_i, p_j)].

    ``L`` comes from the Huesler-Reiss model with variogram value ``v`` or,
    for equal marginals only, from an empirical L(1, 1) via homogeneity of
    order -1.
    """
    if (v is None) == (l_hat is None):
        raise ValueError("give exactly one of v or l_hat")
    pi = np.atleast_1d(np.asarray(p_i, dtype=float))
    pj = np.atleast_1d(np.asarray(p_j, dtype=float))
    pi, pj = np.broadcast_arrays(pi, pj)
    out = np.zeros(pi.shape)
    clamped = False
    for idx, (a, b) in enumerate(zip(pi, pj)):
        if a <= 0 or b <= 0:
            continue
        x, y = 1.0 / (N / k * a), 1.0 / (N / k * b)
        if v is not None:
            L = hr_pair_L(v, x, y)
        else:
            if not math.isclose(a, b, rel_tol=1e-9):
                raise ValueError("empirical L(1, 1) only applies to equal marginal levels")
            L = l_hat / x
        pj_raw = a + b - k / N * L
        if pj_raw <= CANCELLATION_RTOL * (a + b):
            pj_raw = min(pj_raw, 0.0)  # rounding residue of a + b - (a + b)
        val = min(max(pj_raw, 0.0), min(a, b))
        if pj_raw < 0.0 or (v is not None and math.isinf(v)):
            clamped = True
        out[idx] = val
    if clamped:
        warnings.warn("joint first-order tail approximation clamped at 0",
                      FirstOrderApproximationWarning, stacklevel=2)
    return float(out[0]) if np.ndim(p_i) == 0 and np.ndim(p_j) == 0 else out


@dataclass(frozen=True, eq=False)
class RiskEstimate:
    t: np.ndarray
    level: float
    k: int
    p_marginal: dict
    p_joint: np.ndarray | None = None
    components: dict = field(default_factory=dict)


class FailureProbabilityEstimator(BaseEstimator):
    """Fit tail, scedasis and homogenization at one k, then query failure probabilities."""

    def __init__(self, k: int = 3000, bandwidth: float = 0.1, grid_points: int = 201,
                 threshold_rule: str = "calibrated"):
        self.k = k
        self.bandwidth = bandwidth
        self.grid_points = grid_points
        self.threshold_rule = threshold_rule

    def fit(self, X, y=None):
        hom = Homogenizer(self.k, self.bandwidth, self.grid_points).fit(X)
        self.tail_ = hom.tail_
        self.scedasis_ = hom.scedasis_.estimate_
        self.sample_ = hom.transform(X)
        self.z_threshold_, self.z_scale_ = homogenized_level(
            self.tail_, self.sample_.n_stations, self.sample_, self.threshold_rule)
        return self

    def predict(self, t, station: int, level: float):
        check_is_fitted(self)
        return marginal_failure_prob(t, station, level, self.tail_, self.scedasis_,
                                     self.sample_, self.threshold_rule)

    def query(self, t, stations, level: float, variogram=None, lags=None) -> RiskEstimate:
        """Marginals for one or two stations and, for two, the joint probability.

        ``lags`` is the lag vector between the two stations in variogram units.
        """
        check_is_fitted(self)
        t = np.asarray(t, dtype=float)
        marg = {s: np.atleast_1d(self.predict(t, s, level)) for s in stations}
        comps = {"gamma_hat": self.tail_.gamma_hat, "scale_hat": self.z_scale_,
                 "z_threshold": self.z_threshold_}
        joint = None
        if len(stations) == 2:
            if variogram is None or lags is None:
                raise ValueError("joint probability needs a variogram and the station lag")
            v = float(variogram_model(variogram, lags))
            comps["variogram"] = v
            a, b = stations
            joint = joint_failure_prob(marg[a], marg[b], self.k, self.tail_.n_total, v=v)
        return RiskEstimate(t, level, self.k, marg, joint, comps)
