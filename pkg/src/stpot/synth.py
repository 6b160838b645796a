"""Synthetic panels with known tail index, scedasis and dependence.

Each cell (day i, station j) has survival function

    P(X > x) = r_ij * p_base * (1 + gamma (x - loc) / scale) ** (-1 / gamma),   x >= loc

where r_ij = m * c(i/n, s_j) is the relative exceedance rate, so the pooled
tail is exactly generalized Pareto and c is the scedasis of the panel.
Below ``loc`` the bulk is linear in the survival probability down to 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path

import numpy as np

from .ingest import ObservationPanel, StationRecord, load_stations
from .numerics import std_normal_cdf, std_normal_quantile

C_KINDS = ("constant", "linear", "sinusoid")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic panel.

    ``c_params`` is ``(a, b)`` for a linear trend ``a + b t`` and
    ``(amp, phase)`` for ``1 + amp sin(2 pi t + phase)``. ``station_weights``
    scales the stations relative to each other. ``dependence`` is one of
    ``independent``, ``comonotone`` or ``gaussian`` (with ``rho``, an m x m
    correlation matrix, or a scalar for equicorrelation).
    """

    n: int
    m: int
    gamma: float = 0.1
    scale: float = 5.0
    loc: float | None = None
    p_base: float = 0.1
    c_kind: str = "constant"
    c_params: tuple = ()
    station_weights: tuple | None = None
    dependence: str = "independent"
    rho: object = None
    seed: int = 0
    start_date: str = "1931-01-01"
    geometry: str = "grid"

    def __post_init__(self):
        if self.n < 1 or self.m < 2:
            raise ValueError("need n >= 1 and m >= 2")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.c_kind not in C_KINDS:
            raise ValueError(f"unknown c_kind {self.c_kind!r}")
        if self.dependence not in ("independent", "comonotone", "gaussian"):
            raise ValueError(f"unknown dependence {self.dependence!r}")
        if self.station_weights is not None:
            w = np.asarray(self.station_weights, dtype=float)
            if w.shape != (self.m,) or np.any(w <= 0):
                raise ValueError("station_weights must be m positive numbers")
        if self.dependence == "gaussian":
            corr = self.correlation()
            if np.min(np.linalg.eigvalsh(corr)) < -1e-10:
                raise ValueError("rho is not positive semidefinite")
        rates = self.relative_rates()
        if np.max(rates) * self.p_base > 1.0:
            raise ValueError("p_base too large for the requested trend amplitude")
        if self.geometry not in ("grid", "nw_germany"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "nw_germany" and self.m != 68:
            raise ValueError("the nw_germany geometry has 68 stations")

    @property
    def base_level(self) -> float:
        if self.loc is not None:
            return float(self.loc)
        # exact Pareto for gamma > 0, otherwise far enough from zero that
        # the log-scale moment estimator has negligible bias
        return self.scale / self.gamma if self.gamma > 0 else 20.0 * self.scale

    def time_shape(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.c_kind == "constant":
            return np.ones_like(t)
        if self.c_kind == "linear":
            a, b = self.c_params
            g, total = a + b * t, a + b / 2.0
        else:
            amp, phase = self.c_params
            g, total = 1.0 + amp * np.sin(2 * np.pi * t + phase), 1.0
        if np.any(g < 0):
            raise ValueError("trend shape must be nonnegative on [0, 1]")
        return g / total

    def weights(self) -> np.ndarray:
        if self.station_weights is None:
            return np.full(self.m, 1.0 / self.m)
        w = np.asarray(self.station_weights, dtype=float)
        return w / w.sum()

    def true_c(self, t) -> np.ndarray:
        """Scedasis c(t, s_j) on the given times; shape (len(t), m)."""
        return np.outer(self.time_shape(t), self.weights())

    def relative_rates(self) -> np.ndarray:
        t = np.arange(1, self.n + 1) / self.n
        return self.m * self.true_c(t)

    def correlation(self) -> np.ndarray:
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim == 0:
            corr = np.full((self.m, self.m), float(rho))
            np.fill_diagonal(corr, 1.0)
            return corr
        return rho

    def survival(self, x) -> np.ndarray:
        """Pooled-unit survival p_base * GPD tail, valid for x >= loc."""
        z = 1.0 + self.gamma * (np.asarray(x, dtype=float) - self.base_level) / self.scale
        if abs(self.gamma) < 1e-12:
            return self.p_base * np.exp(-(np.asarray(x) - self.base_level) / self.scale)
        return self.p_base * np.where(z > 0, np.abs(z) ** (-1.0 / self.gamma), 0.0)

    def to_json(self) -> str:
        d = asdict(self)
        if isinstance(d["rho"], np.ndarray):
            d["rho"] = d["rho"].tolist()
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        d = json.loads(text)
        for key in ("c_params", "station_weights"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SynthSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def nw_germany_stations() -> list[StationRecord]:
    """The bundled 68-station layout used for variogram round trips."""
    ref = resources.files("stpot") / "data" / "stations_nw_germany.csv"
    with resources.as_file(ref) as path:
        return load_stations(path)


def grid_stations(m: int) -> list[StationRecord]:
    side = int(np.ceil(np.sqrt(m)))
    recs = []
    for j in range(m):
        r, c = divmod(j, side)
        recs.append(StationRecord(f"S{j + 1:03d}", f"synthetic {j + 1}",
                                  8.0 + 0.5 * c, 52.0 + 0.5 * r, 50.0))
    return recs


def _uniforms(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n, m = spec.n, spec.m
    if spec.dependence == "independent":
        return rng.random((n, m))
    if spec.dependence == "comonotone":
        return np.repeat(rng.random((n, 1)), m, axis=1)
    vals, vecs = np.linalg.eigh(spec.correlation())
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((n, m)) @ root.T
    return std_normal_cdf(z)


def quantile(spec: SynthSpec, u: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Inverse transform of the tilted cell distributions."""
    s = 1.0 - u
    tail_p = rates * spec.p_base
    loc, sig, g = spec.base_level, spec.scale, spec.gamma
    out = np.empty_like(s)
    tail = s < tail_p
    ratio = s[tail] / tail_p[tail]
    if abs(g) < 1e-12:
        out[tail] = loc - sig * np.log(ratio)
    else:
        out[tail] = loc + sig * (ratio ** (-g) - 1.0) / g
    bulk = ~tail
    out[bulk] = loc * (1.0 - (s[bulk] - tail_p[bulk]) / (1.0 - tail_p[bulk]))
    return np.maximum(out, 0.0)


def simulate_panel(spec: SynthSpec, stations=None) -> ObservationPanel:
    """Draw a panel; identical specs give bitwise identical panels."""
    rng = np.random.default_rng(spec.seed)
    u = _uniforms(spec, rng)
    rates = np.broadcast_to(spec.relative_rates(), (spec.n, spec.m))
    values = quantile(spec, u, rates)
    if stations is None:
        stations = nw_germany_stations() if spec.geometry == "nw_germany" else grid_stations(spec.m)
    if len(stations) != spec.m:
        raise ValueError("station list does not match m")
    start = np.datetime64(spec.start_date, "D")
    dates = start + np.arange(spec.n)
    return ObservationPanel(tuple(stations), dates, values)


def true_pair_L(spec: SynthSpec, i: int, j: int, level: float | None = None,
                n_samples: int = 10**6, seed: int = 12345) -> float:
    """Tail dependence L(1, 1) of stations i and j.

    Without ``level`` the asymptotic value is returned (a Gaussian copula
    with correlation below one is tail independent). With ``level`` = q the
    pre-asymptotic P(U_i > 1 - q or U_j > 1 - q) / q is estimated by brute force.
    """
    if spec.dependence == "comonotone" or i == j:
        return 1.0
    if spec.dependence == "independent":
        return 2.0 if level is None else 2.0 - level
    rho = spec.correlation()[i, j]
    if level is None:
        return 1.0 if rho >= 1.0 else 2.0
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(n_samples)
    z2 = rho * z1 + np.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(n_samples)
    # compare on the normal scale to avoid evaluating the cdf 2e6 times
    cut = std_normal_quantile(1.0 - level)
    return float(np.mean((z1 > cut) | (z2 > cut)) / level)
