"""Pairwise tail dependence and anisotropic power-variogram fitting.

The empirical tail dependence coefficient L(1, 1) of each station pair is
mapped to a variogram value through the Huesler-Reiss relation
L(1, 1) = 2 Phi(sqrt(v) / 2), and the model

    v(h) = ||A(b1, b2, theta) h|| ** alpha

is fitted by least squares on the variogram scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .homogenize import HomogenizedSample
from .numerics import MinimizerOptions, minimize, std_normal_cdf, std_normal_quantile

PARAM_NAMES = ("b1", "b2", "theta", "alpha")
DEFAULT_LAG_UNIT_KM = 100.0


@dataclass(frozen=True)
class PairEstimate:
    i: int
    j: int
    k_prime: int
    l_hat: float
    censored: bool


def _top_days(days: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Days ordered by decreasing Z; ties go to the earlier day."""
    order = np.lexsort((days, -z))
    return days[order]


def pair_tail_dependence(sample: HomogenizedSample, i: int, j: int,
                         k_total: int | None = None) -> PairEstimate:
    """Empirical L(1, 1) of stations ``i`` and ``j`` from the homogenized sample.

    Each station keeps its k' largest Z values, k' = floor(min(C_i(1), C_j(1)) k);
    L is the number of days on which either station is in its top set,
    divided by k'. Pairs with k' < 2 are censored.
    """
    counts = sample.counts
    k = sample.tailfit.k if k_total is None else k_total
    if k == sample.tailfit.k:
        k_prime = int(min(counts[i], counts[j]))
    else:
        k_prime = int(math.floor(min(counts[i], counts[j]) / sample.tailfit.k * k + 1e-9))
        k_prime = min(k_prime, int(min(counts[i], counts[j])))
    if k_prime < 2:
        return PairEstimate(i, j, k_prime, float("nan"), True)
    top_i = _top_days(*sample.station_values(i))[:k_prime]
    top_j = _top_days(*sample.station_values(j))[:k_prime]
    union = np.union1d(top_i, top_j).size
    l_hat = min(2.0, max(1.0, union / k_prime))
    return PairEstimate(i, j, k_prime, l_hat, False)


def invert_variogram(l_hat, censor_eps: float = 1e-3):
    """v = 4 (Phi^-1(L / 2))^2; values of L within ``censor_eps`` of 2 map to inf."""
    scalar = np.ndim(l_hat) == 0
    L = np.atleast_1d(np.asarray(l_hat, dtype=float))
    if np.any(L < 1.0):
        raise ValueError("tail dependence coefficient below 1")
    out = np.full(L.shape, np.inf)
    ok = L < 2.0 - censor_eps
    out[ok] = 4.0 * std_normal_quantile(L[ok] / 2.0) ** 2
    return float(out[0]) if scalar else out


def l_from_variogram(v):
    """L(1, 1) = 2 Phi(sqrt(v) / 2)."""
    return 2.0 * std_normal_cdf(np.sqrt(v) / 2.0)


def hr_pair_L(v: float, x: float, y: float) -> float:
    """Bivariate Huesler-Reiss L(x, y) for variogram value ``v``."""
    if x <= 0 or y <= 0:
        raise ValueError("L(x, y) requires x, y > 0")
    if v < 0:
        raise ValueError("variogram value must be nonnegative")
    if v == 0:
        return 1.0 / min(x, y)
    if math.isinf(v):
        return 1.0 / x + 1.0 / y
    s = math.sqrt(v)
    r = math.log(y / x)
    return (std_normal_cdf(s / 2.0 + r / s) / x
            + std_normal_cdf(s / 2.0 - r / s) / y)


def anisotropy_matrix(b1: float, b2: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[b1 * c, b1 * s], [-b2 * s, b2 * c]])


def quadratic_form(b1: float, b2: float, theta: float) -> np.ndarray:
    """Symmetric D with ||A h||^2 = h' D h."""
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    d11 = b1 * b1 * c2 + b2 * b2 * s2
    d12 = 0.5 * (b1 * b1 - b2 * b2) * math.sin(2.0 * theta)
    d22 = b1 * b1 * s2 + b2 * b2 * c2
    return np.array([[d11, d12], [d12, d22]])


@dataclass(frozen=True)
class VariogramParams:
    b1: float
    b2: float
    theta: float
    alpha: float
    rss: float = float("nan")
    std_errors: tuple = (float("nan"),) * 4
    p_values: tuple = (float("nan"),) * 4
    converged: bool = True
    n_pairs: int = 0

    def __post_init__(self):
        if not (self.b1 > 0 and self.b2 > 0):
            raise ValueError("b1 and b2 must be positive")
        if not -math.pi / 2 < self.theta <= math.pi / 2:
            raise ValueError("theta must lie in (-pi/2, pi/2]")
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")

    @property
    def values(self) -> tuple:
        return (self.b1, self.b2, self.theta, self.alpha)

    def to_dict(self) -> dict:
        d = {name: val for name, val in zip(PARAM_NAMES, self.values)}
        d.update({f"se_{n}": s for n, s in zip(PARAM_NAMES, self.std_errors)})
        d.update({f"p_{n}": p for n, p in zip(PARAM_NAMES, self.p_values)})
        d.update(rss=self.rss, converged=self.converged, n_pairs=self.n_pairs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariogramParams":
        return cls(
            *(float(d[n]) for n in PARAM_NAMES),
            rss=float(d.get("rss", "nan")),
            std_errors=tuple(float(d.get(f"se_{n}", "nan")) for n in PARAM_NAMES),
            p_values=tuple(float(d.get(f"p_{n}", "nan")) for n in PARAM_NAMES),
            converged=str(d.get("converged", True)) in ("True", "true", "1"),
            n_pairs=int(d.get("n_pairs", 0)),
        )


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi/2, pi/2]."""
    w = math.fmod(theta + math.pi / 2, math.pi)
    if w <= 0:
        w += math.pi
    return w - math.pi / 2


def canonical(b1: float, b2: float, theta: float) -> tuple[float, float, float]:
    """Equivalent parameters with b1 <= b2."""
    if b1 > b2:
        b1, b2, theta = b2, b1, theta + math.pi / 2
    return b1, b2, wrap_angle(theta)


def _model(b1, b2, theta, alpha, h: np.ndarray) -> np.ndarray:
    D = quadratic_form(b1, b2, theta)
    q = D[0, 0] * h[..., 0] ** 2 + 2 * D[0, 1] * h[..., 0] * h[..., 1] + D[1, 1] * h[..., 1] ** 2
    return np.maximum(q, 0.0) ** (alpha / 2.0)


def variogram_model(params, h) -> np.ndarray:
    """(h' D h)^(alpha/2) for lag vectors ``h`` of shape (..., 2)."""
    b1, b2, theta, alpha = params.values if isinstance(params, VariogramParams) else params
    h = np.asarray(h, dtype=float)
    out = _model(b1, b2, theta, alpha, h)
    return float(out) if out.ndim == 0 else out


def variogram_model_matrix(params, h) -> np.ndarray:
    """Same model through ||A h||^alpha, kept as an independent cross-check."""
    b1, b2, theta, alpha = params.values if isinstance(params, VariogramParams) else params
    h = np.asarray(h, dtype=float)
    Ah = h @ anisotropy_matrix(b1, b2, theta).T
    out = np.linalg.norm(Ah, axis=-1) ** alpha
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PairwiseDependence:
    """All station pairs with lags in variogram units (``lag_unit_km`` km)."""

    i: np.ndarray
    j: np.ndarray
    lag: np.ndarray  # (pairs, 2)
    k_prime: np.ndarray
    l_hat: np.ndarray
    v_hat: np.ndarray
    censored: np.ndarray
    lag_unit_km: float = DEFAULT_LAG_UNIT_KM

    @property
    def distance(self) -> np.ndarray:
        return np.hypot(self.lag[:, 0], self.lag[:, 1])

    @property
    def angle(self) -> np.ndarray:
        """Lag direction in (-pi/2, pi/2]."""
        return np.array([wrap_angle(a) for a in np.arctan2(self.lag[:, 1], self.lag[:, 0])])

    def usable(self) -> np.ndarray:
        return ~self.censored & np.isfinite(self.v_hat)


def pairwise_dependence(sample: HomogenizedSample, coords_km, *, lag_unit_km=DEFAULT_LAG_UNIT_KM,
                        censor_eps: float = 1e-3) -> PairwiseDependence:
    coords = np.asarray(coords_km, dtype=float) / lag_unit_km
    m = sample.n_stations
    ii, jj = np.triu_indices(m, k=1)
    kp = np.zeros(ii.size, dtype=int)
    L = np.full(ii.size, np.nan)
    cens = np.zeros(ii.size, dtype=bool)
    for p, (a, b) in enumerate(zip(ii, jj)):
        est = pair_tail_dependence(sample, a, b)
        kp[p], L[p], cens[p] = est.k_prime, est.l_hat, est.censored
    v = np.full(ii.size, np.inf)
    ok = ~cens
    v[ok] = invert_variogram(L[ok], censor_eps)
    cens |= ~np.isfinite(v)
    return PairwiseDependence(ii, jj, coords[ii] - coords[jj], kp, L, v, cens, lag_unit_km)


def _to_native(p):
    lb1, lb2, phi, la = p
    return math.exp(lb1), math.exp(lb2), phi, 2.0 / (1.0 + math.exp(-la))


def _logit_half(alpha):
    a = min(max(alpha / 2.0, 1e-6), 1 - 1e-6)
    return math.log(a / (1 - a))


def _start_points(lags, v, n_starts, seed):
    d = np.hypot(lags[:, 0], lags[:, 1])
    ok = (v > 0) & (d > 0)
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(np.log(d[ok]), np.log(v[ok]), 1)
        alpha = float(np.clip(slope, 0.1, 1.9))
        b = math.exp(icpt / alpha)
    else:
        alpha, b = 1.0, 1.0
    rng = np.random.default_rng(seed)
    starts = [np.array([math.log(b), math.log(b), 0.0, _logit_half(alpha)])]
    thetas = np.linspace(-math.pi / 2, math.pi / 2, n_starts, endpoint=False)
    for s in range(1, n_starts):
        ratio = rng.uniform(0.25, 4.0)
        a = float(np.clip(alpha * rng.uniform(0.7, 1.3), 0.1, 1.9))
        starts.append(np.array([math.log(b / math.sqrt(ratio)), math.log(b * math.sqrt(ratio)),
                                thetas[s], _logit_half(a)]))
    return starts


def _standard_errors(params, lags, v, rss):
    n = len(v)
    x = np.array(params, dtype=float)
    J = np.empty((n, 4))
    for c in range(4):
        step = 1e-5 * max(abs(x[c]), 1e-3)
        up, dn = x.copy(), x.copy()
        up[c] += step
        dn[c] -= step
        if c == 3 and up[c] > 2.0:
            up[c], dn[c] = x[c], x[c] - 2 * step
            J[:, c] = (_model(*up, lags) - _model(*dn, lags)) / (2 * step)
            continue
        J[:, c] = (_model(*up, lags) - _model(*dn, lags)) / (2 * step)
    if n <= 4:
        return (float("nan"),) * 4, (float("nan"),) * 4
    sigma2 = rss / (n - 4)
    w, V = np.linalg.eigh(J.T @ J)
    if w.max() <= 0:
        return (float("nan"),) * 4, (float("nan"),) * 4
    small = w < 1e-12 * w.max()
    inv_w = np.where(small, 0.0, 1.0 / np.where(small, 1.0, w))
    cov = sigma2 * (V * inv_w) @ V.T
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if small.any():
        flagged = np.abs(V[:, small]).max(axis=1) > 1e-6
        se[flagged] = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        zstat = np.abs(x) / se
    pv = np.where(np.isfinite(se) & (se > 0), 2.0 * (1.0 - std_normal_cdf(zstat)), np.nan)
    return tuple(float(s) for s in se), tuple(float(p) for p in pv)


def fit_variogram(lags, v_hat, n_starts: int = 8, options: MinimizerOptions | None = None,
                  seed: int = 0) -> VariogramParams:
    """Least-squares fit of the anisotropic power variogram.

    Parameters are optimized as (log b1, log b2, theta, logit(alpha/2));
    theta enters only through a period-pi function and is wrapped afterwards.
    Several deterministic starting points are tried and the best kept.
    """
    lags = np.asarray(lags, dtype=float)
    v = np.asarray(v_hat, dtype=float)
    ok = np.isfinite(v)
    lags, v = lags[ok], v[ok]
    if v.size < 8:
        raise ValueError(f"need at least 8 usable pairs, got {v.size}")
    directions = {round(wrap_angle(math.atan2(y, x)), 6) for x, y in lags if x or y}
    if len(directions) < 3:
        raise ValueError("pairs must span at least 3 distinct directions")
    opts = options or MinimizerOptions(max_iterations=20000, tolerance_f=1e-14,
                                       tolerance_x=1e-10, restarts=3)

    def rss(p):
        r = v - _model(*_to_native(p), lags)
        return float(r @ r)

    best = None
    for s, x0 in enumerate(_start_points(lags, v, n_starts, seed)):
        res = minimize(rss, x0, MinimizerOptions(opts.max_iterations, opts.tolerance_f,
                                                 opts.tolerance_x, opts.restarts, seed + s),
                       step=np.array([0.2, 0.2, 0.3, 0.3]))
        if best is None or res.fun < best.fun:
            best = res
    b1, b2, phi, alpha = _to_native(best.x)
    b1, b2, theta = canonical(b1, b2, phi)
    alpha = min(alpha, 2.0)
    final_rss = float(np.sum((v - _model(b1, b2, theta, alpha, lags)) ** 2))
    se, pv = _standard_errors((b1, b2, theta, alpha), lags, v, final_rss)
    return VariogramParams(b1, b2, theta, alpha, final_rss, se, pv, bool(best.converged), int(v.size))


def model_grid(params, extent: float = 3.0, points: int = 61) -> np.ndarray:
    """Model variogram on a square lag grid; rows of (hx, hy, v)."""
    g = np.linspace(-extent, extent, points)
    hx, hy = np.meshgrid(g, g, indexing="xy")
    h = np.stack([hx.ravel(), hy.ravel()], axis=1)
    return np.column_stack([h, variogram_model(params, h)])


class VariogramFitter(BaseEstimator):
    """Estimator interface: ``fit(lags, v_hat)`` then ``predict(lags)``."""

    def __init__(self, n_starts: int = 8, seed: int = 0):
        self.n_starts = n_starts
        self.seed = seed

    def fit(self, X, y):
        self.params_ = fit_variogram(X, y, n_starts=self.n_starts, seed=self.seed)
        return self

    def fit_pairs(self, pairs: PairwiseDependence):
        use = pairs.usable()
        return self.fit(pairs.lag[use], pairs.v_hat[use])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        return variogram_model(self.params_, X)
