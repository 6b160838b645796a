"""Special functions and a derivative-free minimizer.

Everything here is self-contained (stdlib ``math`` plus numpy) so the
estimation modules do not depend on scipy at run time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def std_normal_cdf(x):
    """Standard normal distribution function; accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    x = np.asarray(x, dtype=float)
    return 0.5 * _erfc(-x / _SQRT2)


_erfc = np.vectorize(math.erfc, otypes=[float])


def std_normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def _quantile_scalar(p: float) -> float:
    if not 0.0 < p < 1.0 or math.isnan(p):
        raise ValueError(f"normal quantile requires 0 < p < 1, got {p!r}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    # one Halley polish step; the residual is taken on the smaller tail
    if p < 0.5:
        e = 0.5 * math.erfc(-x / _SQRT2) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def std_normal_quantile(p):
    """Left-continuous inverse of the standard normal cdf.

    Raises
    ------
    ValueError
        If any ``p`` lies outside the open interval (0, 1).
    """
    if np.ndim(p) == 0:
        return _quantile_scalar(float(p))
    p = np.asarray(p, dtype=float)
    return np.array([_quantile_scalar(v) for v in p.ravel()]).reshape(p.shape)


def kolmogorov_sup_cdf(x: float, tol: float = 1e-12, max_terms: int = 100) -> float:
    """P(sup |B(t)| <= x) for a standard Brownian bridge B on [0, 1].

    Uses the alternating series 1 + 2 sum (-1)^j exp(-2 j^2 x^2). For small
    ``x`` the series converges slowly, so the dual theta-function form is
    used below x = 0.5.
    """
    x = float(x)
    if x < 0:
        raise ValueError("kolmogorov_sup_cdf requires x >= 0")
    if x < 0.04:
        # below 1e-300; also keeps 8 x^2 from underflowing
        return 0.0
    if x < 0.5:
        # sqrt(2 pi)/x * sum_j exp(-(2j-1)^2 pi^2 / (8 x^2))
        total = 0.0
        for j in range(1, max_terms + 1):
            term = math.exp(-((2 * j - 1) ** 2) * math.pi ** 2 / (8.0 * x * x))
            total += term
            if term < tol:
                break
        return min(1.0, math.sqrt(2.0 * math.pi) / x * total)
    total = 1.0
    for j in range(1, max_terms + 1):
        term = 2.0 * math.exp(-2.0 * j * j * x * x)
        total += -term if j % 2 else term
        if term < tol:
            break
    return min(1.0, max(0.0, total))


@dataclass(frozen=True)
class MinimizerOptions:
    max_iterations: int = 4000
    tolerance_f: float = 1e-12
    tolerance_x: float = 1e-10
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance_f <= 0 or self.tolerance_x <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")


class MinimizeResult(NamedTuple):
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int = 0
    n_eval: int = 0


def _initial_simplex(x0: np.ndarray, steps: np.ndarray) -> np.ndarray:
    d = x0.size
    sim = np.empty((d + 1, d))
    sim[0] = x0
    for i in range(d):
        sim[i + 1] = x0
        sim[i + 1, i] = x0[i] + steps[i]
    return sim


def _nelder_mead(f, sim, fsim, opts: MinimizerOptions):
    d = sim.shape[1]
    n_eval = 0
    converged = False
    it = 0
    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]
    while it < opts.max_iterations:
        f_spread = np.max(np.abs(fsim[1:] - fsim[0]))
        if f_spread == 0.0 or (
            f_spread <= opts.tolerance_f
            and np.max(np.abs(sim[1:] - sim[0])) <= opts.tolerance_x
        ):
            converged = True
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        n_eval += 1
        shrink = False
        if fr < fsim[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = f(xe)
            n_eval += 1
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            if fr < fsim[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                n_eval += 1
                if fc <= fr:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    shrink = True
            else:
                xc = centroid + 0.5 * (sim[-1] - centroid)
                fc = f(xc)
                n_eval += 1
                if fc < fsim[-1]:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    shrink = True
            if shrink:
                for i in range(1, d + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fsim[i] = f(sim[i])
                n_eval += d
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
    return sim[0].copy(), float(fsim[0]), converged, it, n_eval


def minimize(
    f: Callable[[np.ndarray], float],
    x0,
    opts: MinimizerOptions | None = None,
    step=None,
) -> MinimizeResult:
    """Nelder-Mead simplex minimization with deterministic restarts.

    Each restart rebuilds the simplex around the incumbent using step sizes
    drawn from a generator seeded by ``opts.seed``. Non-finite objective
    values away from ``x0`` are treated as +inf.

    Returns
    -------
    MinimizeResult
        Unpacks as ``(x, fun, converged, n_iter, n_eval)``. ``converged``
        reflects the final simplex run.
    """
    opts = opts or MinimizerOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    f0 = float(f(x0))
    if not math.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    def fw(x):
        v = float(f(x))
        return v if math.isfinite(v) else math.inf

    if step is None:
        steps = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.00025)
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), x0.shape).copy()
    rng = np.random.default_rng(opts.seed)

    sim = _initial_simplex(x0, steps)
    fsim = np.array([f0] + [fw(p) for p in sim[1:]])
    best_x, best_f, converged, n_iter, n_eval = _nelder_mead(fw, sim, fsim, opts)
    n_eval += x0.size + 1
    for _ in range(opts.restarts):
        scale = rng.uniform(0.5, 1.5, size=x0.size) * rng.choice([-1.0, 1.0], size=x0.size)
        sim = _initial_simplex(best_x, steps * scale)
        fsim = np.array([best_f] + [fw(p) for p in sim[1:]])
        x, fx, converged, it, ne = _nelder_mead(fw, sim, fsim, opts)
        n_iter += it
        n_eval += ne + x0.size
        if fx <= best_f:
            best_x, best_f = x, fx
    return MinimizeResult(best_x, best_f, converged, n_iter, n_eval)
