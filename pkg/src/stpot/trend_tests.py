"""Per-station tests of space and time homogeneity of high exceedances.

Space: is the share of exceedances at station j equal to 1/m?
Time: is C_j(t) / C_j(1) = t, i.e. are the exceedance times uniform?

Both use conservative normal / Brownian-bridge approximations and a
Bonferroni correction over the m stations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .numerics import kolmogorov_sup_cdf, std_normal_cdf
from .scedasis import ExceedanceProcess, estimate_C, exceedance_times
from .tail import fit_tail

NULL_MODES = ("maximal", "independence")


@dataclass(frozen=True, eq=False)
class TrendTestResult:
    t_j1: np.ndarray
    z_j1: np.ndarray
    p_j1: np.ndarray
    t_j2: np.ndarray
    argsup_t: np.ndarray
    sigma_star: np.ndarray
    p_j2: np.ndarray
    alpha: float
    mode: str

    @property
    def m(self) -> int:
        return len(self.t_j1)

    @property
    def significant_j1(self) -> np.ndarray:
        return self.p_j1 < self.alpha / self.m

    @property
    def significant_j2(self) -> np.ndarray:
        return self.p_j2 < self.alpha / self.m


def _check_mode(mode: str) -> None:
    if mode not in NULL_MODES:
        raise ValueError(f"mode must be one of {NULL_MODES}, got {mode!r}")


def test_space_homogeneity(C1, k: int, mode: str = "maximal"):
    """Statistic sqrt(k)|C_j(1) - 1/m| with its two-sided normal p-value.

    ``mode="maximal"`` standardizes by the largest standard deviation the limit
    can have under any dependence between stations, 2(1 - 1/m)/sqrt(m);
    ``mode="independence"`` uses sqrt((1 - 1/m)/m).

    Returns ``(T, z, p)`` arrays.
    """
    _check_mode(mode)
    C1 = np.asarray(C1, dtype=float)
    m = C1.size
    if m < 2:
        raise ValueError("need at least two stations")
    dev = math.sqrt(k) * (C1 - 1.0 / m)
    if mode == "maximal":
        sd = 2.0 * (1.0 - 1.0 / m) / math.sqrt(m)
    else:
        sd = math.sqrt((1.0 - 1.0 / m) / m)
    z = dev / sd
    p = np.minimum(1.0, 2.0 * (1.0 - std_normal_cdf(np.abs(z))))
    return np.abs(dev), z, p


test_space_homogeneity.__test__ = False


def max_bridge_variance(c: float) -> float:
    """max over t in [0, 1] of t(1 - t) c (1 - t c)."""
    if c <= 0:
        return 0.0
    t = ((1.0 + c) - math.sqrt(1.0 - c + c * c)) / (3.0 * c)
    t = min(max(t, 0.0), 1.0)
    return t * (1.0 - t) * c * (1.0 - t * c)


def sup_statistic(u: np.ndarray, k: int) -> tuple[float, float]:
    """sup_t sqrt(k)|C(t) - t C(1)| for a step function with jumps at ``u``.

    The difference is linear between jumps, so only left and right limits at
    the jump points need checking. Returns ``(T, argsup)``.
    """
    u = np.sort(np.asarray(u, dtype=float))
    if u.size == 0:
        return 0.0, 0.0
    c1 = u.size / k
    left = np.searchsorted(u, u, side="left") / k
    right = np.searchsorted(u, u, side="right") / k
    dl = np.abs(left - u * c1)
    dr = np.abs(right - u * c1)
    i, j = int(np.argmax(dl)), int(np.argmax(dr))
    if dl[i] >= dr[j]:
        return math.sqrt(k) * float(dl[i]), float(u[i])
    return math.sqrt(k) * float(dr[j]), float(u[j])


def test_time_homogeneity(exc: ExceedanceProcess, mode: str = "maximal"):
    """Sup statistic per station with a Brownian-bridge p-value.

    The bridge is rescaled so its largest standard deviation (1/2) matches
    sigma* = sqrt(max_t t(1-t)c(1-tc)), c = C_j(1); the p-value is
    ``1 - K(T / (2 sigma*))`` with K the Kolmogorov distribution. Both null
    modes share this recipe, since the independence variances are exactly
    the ones maximized.

    Returns ``(T, argsup, sigma_star, p)`` arrays.
    """
    _check_mode(mode)
    m = exc.m
    T, arg, sig, p = (np.zeros(m) for _ in range(4))
    p[:] = 1.0
    for j, u in enumerate(exc.fractions):
        if len(u) == 0:
            continue
        T[j], arg[j] = sup_statistic(u, exc.k)
        sig[j] = math.sqrt(max_bridge_variance(len(u) / exc.k))
        if sig[j] > 0:
            p[j] = 1.0 - kolmogorov_sup_cdf(T[j] / (2.0 * sig[j]))
    return T, arg, sig, p


test_time_homogeneity.__test__ = False


def run_tests(exc: ExceedanceProcess, mode: str = "maximal", alpha: float = 0.05) -> TrendTestResult:
    C1 = estimate_C(exc, 1.0)
    t1, z1, p1 = test_space_homogeneity(C1, exc.k, mode)
    t2, arg, sig, p2 = test_time_homogeneity(exc, mode)
    return TrendTestResult(t1, z1, p1, t2, arg, sig, p2, alpha, mode)


class TrendTester(BaseEstimator):
    """Fit the unified threshold and run both homogeneity tests."""

    def __init__(self, k: int = 3000, mode: str = "maximal", alpha: float = 0.05):
        self.k = k
        self.mode = mode
        self.alpha = alpha

    def fit(self, X, y=None, tailfit=None):
        self.tail_ = tailfit if tailfit is not None else fit_tail(X, self.k)
        self.result_ = run_tests(exceedance_times(X, self.tail_), self.mode, self.alpha)
        return self
