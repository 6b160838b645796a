"""Batch command line interface: one subcommand per pipeline stage.

Every stage reads the artifacts of its predecessor from the output
directory and writes its own. Artifacts are plain text, start with ``#``
provenance lines (stage name and config hash) and contain no timestamps,
so re-running a stage with the same inputs reproduces them byte for byte.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import shutil
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .decluster import decluster
from .dependence import (DEFAULT_LAG_UNIT_KM, VariogramParams, fit_variogram, model_grid,
                         pairwise_dependence)
from .homogenize import HomogenizedSample, TrendSupportError, homogenize
from .ingest import (DataError, load_observations, load_panel, load_stations, project_coordinates,
                     save_panel, save_stations, select_season)
from .risk import FailureProbabilityEstimator
from .scedasis import ScedasisEstimate, estimate_C, estimate_c, exceedance_times
from .synth import SynthSpec, simulate_panel
from .tail import DegenerateSampleError, TailFit, fit_tail, gamma_trace
from .trend_tests import NULL_MODES, run_tests

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "STPOT_OUTPUT_DIR"

# stage -> primary artifact
ARTIFACTS = {
    "ingest": "panel.csv",
    "decluster": "declustered.csv",
    "fit-tail": "tailfit.txt",
    "scedasis": "scedasis.csv",
    "test-trend": "trend_tests.csv",
    "homogenize": "homogenized.csv",
    "fit-variogram": "variogram.txt",
    "risk": "risk.csv",
}
SECONDARY = ("stations.csv", "gamma_trace.csv", "pairs.csv", "variogram_grid.csv")


class UsageError(Exception):
    """Invalid options or stages run out of order."""


class NumericalError(Exception):
    """An estimate could not be computed from the data."""


@dataclass
class PipelineConfig:
    stations: str | None = None
    observations: str | None = None
    output_dir: str = "stpot_out"
    season: str = "cold"
    k: int = 3000
    bandwidth: float = 0.1
    grid_points: int = 201
    alpha: float = 0.05
    null_mode: str = "maximal"
    lag_days: int = 2
    decluster_target: int | None = None
    min_pairs: int = 8
    censor_eps: float = 1e-3
    lag_unit_km: float = DEFAULT_LAG_UNIT_KM
    risk_stations: list = field(default_factory=list)
    risk_level: float | None = None
    risk_ks: list = field(default_factory=list)
    t_grid: int = 101
    spec: str | None = None
    threads: int = 1
    plot: bool = False

    # options that do not change artifact contents
    _UNHASHED = ("output_dir", "threads", "plot")

    def validate(self) -> None:
        if self.k < 2:
            raise UsageError("k must be >= 2")
        if not 0 < self.bandwidth <= 0.5:
            raise UsageError("bandwidth must lie in (0, 0.5]")
        if self.grid_points < 2:
            raise UsageError("grid-points must be >= 2")
        if not 0 < self.alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        if self.null_mode not in NULL_MODES:
            raise UsageError(f"null-mode must be one of {NULL_MODES}")
        if self.lag_days < 0:
            raise UsageError("lag-days must be >= 0")
        if self.decluster_target is not None and self.decluster_target < 1:
            raise UsageError("decluster-target must be >= 1")
        if self.min_pairs < 1 or self.censor_eps <= 0 or self.lag_unit_km <= 0:
            raise UsageError("min-pairs, censor-eps and lag-unit-km must be positive")
        if any(k < 2 for k in self.risk_ks):
            raise UsageError("every risk k must be >= 2")
        if self.t_grid < 2:
            raise UsageError("t-grid must be >= 2")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")

    def hash(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in self._UNHASHED}
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- config I/O

_INT = ("k", "grid_points", "lag_days", "decluster_target", "min_pairs", "t_grid", "threads")
_FLOAT = ("bandwidth", "alpha", "censor_eps", "lag_unit_km", "risk_level")


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in ("risk_stations",):
        return [s.strip() for s in raw.split(",") if s.strip()]
    if key == "risk_ks":
        return [int(s) for s in raw.split(",") if s.strip()]
    if key == "plot":
        return raw.lower() in ("1", "true", "yes", "on")
    if raw.lower() in ("", "none"):
        return None
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """Flatten an INI file; keys may use dashes or underscores, sections are ignored."""
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path, encoding="utf-8"):
            raise UsageError(f"config file {path} not found")
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    known = set(PipelineConfig.__dataclass_fields__)
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            if name not in known:
                raise UsageError(f"config file {path}: unknown option {key!r} in [{section}]")
            try:
                out[name] = _coerce(name, raw)
            except ValueError:
                raise UsageError(f"config file {path}: bad value for {key!r}: {raw!r}") from None
    return out


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then the config file, then the output-dir env var, then flags."""
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    if os.environ.get(OUTPUT_ENV):
        values["output_dir"] = os.environ[OUTPUT_ENV]
    for name in PipelineConfig.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None and flag != []:
            values[name] = flag
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


# ------------------------------------------------------------- artifact I/O


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Workspace:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self.chash = cfg.hash()

    def path(self, name: str) -> Path:
        return self.root / name

    def header(self, stage: str, extra=()) -> list[str]:
        return [f"stpot {__version__} stage: {stage}", f"config_hash: {self.chash}", *extra]

    def require(self, stage: str, needed_by: str) -> Path:
        p = self.path(ARTIFACTS[stage])
        if not p.exists():
            raise UsageError(
                f"{needed_by} needs {p}, which is missing; run `stpot {stage}` first"
            )
        return p

    def write_text(self, name: str, stage: str, body: str, extra=()) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        head = "".join(f"# {line}\n" for line in self.header(stage, extra))
        p = self.path(name)
        p.write_text(head + body, encoding="utf-8")
        return p

    def write_table(self, name: str, stage: str, columns, rows, extra=()) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return self.write_text(name, stage, buf.getvalue(), extra)

    def write_keyvalue(self, name: str, stage: str, d: dict, extra=()) -> Path:
        body = "".join(f"{k}: {_fmt(v)}\n" for k, v in d.items())
        return self.write_text(name, stage, body, extra)


def read_header(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.startswith("#"):
            break
        key, sep, val = line[1:].partition(":")
        if sep:
            out[key.strip()] = val.strip()
    return out


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        key, _, val = line.partition(":")
        out[key.strip()] = val.strip()
    return out


def read_table(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# ------------------------------------------------------------------ loaders


def _catalog(ws: Workspace):
    p = ws.path("stations.csv")
    if not p.exists():
        raise UsageError(f"{p} is missing; run `stpot ingest` first")
    catalog = load_stations(p)
    header, rows = read_table(p)
    coords = None
    if "x_km" in header:
        ix, iy = header.index("x_km"), header.index("y_km")
        coords = np.array([[float(r[ix]), float(r[iy])] for r in rows])
    return catalog, coords


def _declustered(ws: Workspace, needed_by: str):
    path = ws.require("decluster", needed_by)
    catalog, coords = _catalog(ws)
    panel = load_panel(path, catalog)
    return replace(panel, planar_coords=coords) if coords is not None else panel


def _tailfit(ws: Workspace, needed_by: str) -> TailFit:
    return TailFit.from_dict(read_keyvalue(ws.require("fit-tail", needed_by)))


def _scedasis(ws: Workspace, needed_by: str, station_ids) -> ScedasisEstimate:
    path = ws.require("scedasis", needed_by)
    meta = read_header(path)
    header, rows = read_table(path)
    ti, si, ci = header.index("t"), header.index("station_id"), header.index("c_hat")
    by_station = {}
    for r in rows:
        by_station.setdefault(r[si], []).append((float(r[ti]), float(r[ci])))
    t = np.array([v[0] for v in by_station[station_ids[0]]])
    c = np.column_stack([[v[1] for v in by_station[s]] for s in station_ids])
    return ScedasisEstimate(t, c, float(meta.get("bandwidth", "nan")))


def _homogenized(ws: Workspace, needed_by: str, tailfit: TailFit, station_ids) -> HomogenizedSample:
    path = ws.require("homogenize", needed_by)
    meta = read_header(path)
    header, rows = read_table(path)
    index = {s: j for j, s in enumerate(station_ids)}
    col = {name: header.index(name) for name in header}
    day = np.array([int(r[col["day"]]) for r in rows], dtype=int)
    station = np.array([index[r[col["station_id"]]] for r in rows], dtype=int)
    t, x, z = (np.array([float(r[col[c]]) for r in rows]) for c in ("t", "x", "z"))
    return HomogenizedSample(day, station, t, x, z, tailfit,
                             int(meta["n_days"]), int(meta["n_stations"]))


def _variogram(ws: Workspace, needed_by: str) -> tuple[VariogramParams, float]:
    d = read_keyvalue(ws.require("fit-variogram", needed_by))
    return VariogramParams.from_dict(d), float(d["lag_unit_km"])


# ------------------------------------------------------------------- stages


def stage_simulate(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    if not cfg.spec:
        raise UsageError("simulate needs --spec FILE")
    if not Path(cfg.spec).exists():
        raise DataError(f"spec file {cfg.spec} not found")
    try:
        spec = SynthSpec.from_file(cfg.spec)
    except (ValueError, TypeError) as exc:
        raise DataError(f"spec file {cfg.spec}: {exc}") from None
    panel = simulate_panel(spec)
    ws.root.mkdir(parents=True, exist_ok=True)
    st = ws.path("simulated_stations.csv")
    save_stations(panel.stations, st)
    # raw input format, so no provenance header
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station_id", "date", "precip_mm"])
    for d, row in zip(panel.dates, panel.values):
        for sid, v in zip(panel.station_ids, row):
            w.writerow([sid, str(d), _fmt(v)])
    ob = ws.path("simulated_observations.csv")
    ob.write_text(buf.getvalue(), encoding="utf-8")
    return [st, ob]


def stage_ingest(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    for name in ("stations", "observations"):
        p = getattr(cfg, name)
        if not p:
            raise UsageError(f"ingest needs --{name} FILE")
        if not Path(p).exists():
            raise DataError(f"{name} file {p} not found")
    catalog = load_stations(cfg.stations)
    panel = project_coordinates(select_season(load_observations(cfg.observations, catalog),
                                              cfg.season))
    ws.root.mkdir(parents=True, exist_ok=True)
    st = ws.path("stations.csv")
    save_stations(panel.stations, st, panel.planar_coords)
    out = ws.path(ARTIFACTS["ingest"])
    save_panel(panel, out, ws.header("ingest", [f"n_days: {panel.n_days}",
                                                 f"n_stations: {panel.n_stations}",
                                                 f"n_observed: {panel.n_observed}"]))
    return [st, out]


def stage_decluster(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    catalog, coords = _catalog(ws)
    panel = load_panel(ws.require("ingest", "decluster"), catalog)
    dec = decluster(panel, cfg.lag_days, cfg.decluster_target)
    if cfg.decluster_target and dec.retained_count < cfg.decluster_target:
        warnings.warn(f"only {dec.retained_count} days retained (target {cfg.decluster_target})",
                      stacklevel=2)
    out = ws.path(ARTIFACTS["decluster"])
    save_panel(dec.to_panel(), out, ws.header("decluster", [
        f"lag_days: {cfg.lag_days}", f"retained_days: {dec.retained_count}"]))
    return [out]


def _default_trace_ks(n_values: int, k: int) -> np.ndarray:
    hi = max(min(n_values - 1, 2 * k), 3)
    lo = min(max(10, k // 20), hi - 1)
    return np.unique(np.round(np.geomspace(lo, hi, 50)).astype(int))


def stage_fit_tail(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    panel = _declustered(ws, "fit-tail")
    fit = fit_tail(panel, cfg.k)
    tf = ws.write_keyvalue(ARTIFACTS["fit-tail"], "fit-tail", fit.to_dict(),
                           [f"season: {panel.season}"])
    trace = gamma_trace(panel, _default_trace_ks(fit.n_total, cfg.k))
    names = trace.dtype.names
    tr = ws.write_table("gamma_trace.csv", "fit-tail", names,
                        ([row[n] for n in names] for row in trace))
    return [tf, tr]


def stage_scedasis(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    panel = _declustered(ws, "scedasis")
    tailfit = _tailfit(ws, "scedasis")
    exc = exceedance_times(panel, tailfit)
    est = estimate_c(exc, cfg.bandwidth, np.linspace(0.0, 1.0, cfg.grid_points))
    m = panel.n_stations
    rows = ((t, sid, est.c_hat[g, j], m * est.c_hat[g, j])
            for j, sid in enumerate(panel.station_ids) for g, t in enumerate(est.t_grid))
    out = ws.write_table(ARTIFACTS["scedasis"], "scedasis", ["t", "station_id", "c_hat", "m_c_hat"],
                         rows, [f"bandwidth: {_fmt(cfg.bandwidth)}", f"k: {tailfit.k}"])
    return [out]


def stage_test_trend(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    panel = _declustered(ws, "test-trend")
    tailfit = _tailfit(ws, "test-trend")
    ws.require("scedasis", "test-trend")
    exc = exceedance_times(panel, tailfit)
    res = run_tests(exc, cfg.null_mode, cfg.alpha)
    C1 = estimate_C(exc, 1.0)
    cols = ["station_id", "C1", "t_j1", "z_j1", "p_j1", "significant_j1",
            "t_j2", "argsup_t", "sigma_star", "p_j2", "significant_j2"]
    rows = ((sid, C1[j], res.t_j1[j], res.z_j1[j], res.p_j1[j], res.significant_j1[j],
             res.t_j2[j], res.argsup_t[j], res.sigma_star[j], res.p_j2[j], res.significant_j2[j])
            for j, sid in enumerate(panel.station_ids))
    out = ws.write_table(ARTIFACTS["test-trend"], "test-trend", cols, rows, [
        f"null_mode: {cfg.null_mode}", f"alpha: {_fmt(cfg.alpha)}",
        f"bonferroni_level: {_fmt(cfg.alpha / panel.n_stations)}",
        f"rejected_j1: {int(res.significant_j1.sum())}",
        f"rejected_j2: {int(res.significant_j2.sum())}"])
    return [out]


def stage_homogenize(ws: Workspace) -> list[Path]:
    panel = _declustered(ws, "homogenize")
    tailfit = _tailfit(ws, "homogenize")
    sced = _scedasis(ws, "homogenize", panel.station_ids)
    sample = homogenize(panel, tailfit, sced)
    ids = panel.station_ids
    order = np.lexsort((sample.station, sample.day))
    rows = ((sample.day[i], str(panel.dates[sample.day[i]]), ids[sample.station[i]],
             sample.t[i], sample.x[i], sample.z[i]) for i in order)
    out = ws.write_table(ARTIFACTS["homogenize"], "homogenize",
                         ["day", "date", "station_id", "t", "x", "z"], rows,
                         [f"n_days: {sample.n_days}", f"n_stations: {sample.n_stations}"])
    return [out]


def stage_fit_variogram(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    panel = _declustered(ws, "fit-variogram")
    tailfit = _tailfit(ws, "fit-variogram")
    sample = _homogenized(ws, "fit-variogram", tailfit, panel.station_ids)
    if panel.planar_coords is None:
        raise DataError("stations.csv has no planar coordinates; re-run `stpot ingest`")
    pairs = pairwise_dependence(sample, panel.planar_coords, lag_unit_km=cfg.lag_unit_km,
                                censor_eps=cfg.censor_eps)
    ids = panel.station_ids
    dist, ang = pairs.distance, pairs.angle
    rows = ((ids[a], ids[b], dist[p] * cfg.lag_unit_km, ang[p], pairs.k_prime[p],
             pairs.l_hat[p], pairs.v_hat[p], pairs.censored[p])
            for p, (a, b) in enumerate(zip(pairs.i, pairs.j)))
    pr = ws.write_table("pairs.csv", "fit-variogram",
                        ["station_a", "station_b", "distance_km", "angle", "k_prime",
                         "l_hat", "v_hat", "censored"], rows,
                        [f"lag_unit_km: {_fmt(cfg.lag_unit_km)}"])
    use = pairs.usable()
    if use.sum() < max(cfg.min_pairs, 8):
        raise NumericalError(f"only {int(use.sum())} usable pairs; need at least "
                             f"{max(cfg.min_pairs, 8)} to fit the variogram")
    try:
        params = fit_variogram(pairs.lag[use], pairs.v_hat[use])
    except ValueError as exc:
        raise NumericalError(f"variogram fit failed: {exc}") from None
    vg = ws.write_keyvalue(ARTIFACTS["fit-variogram"], "fit-variogram",
                           {**params.to_dict(), "lag_unit_km": cfg.lag_unit_km})
    grid = model_grid(params)
    gr = ws.write_table("variogram_grid.csv", "fit-variogram", ["hx", "hy", "v"], grid,
                        [f"lag_unit_km: {_fmt(cfg.lag_unit_km)}"])
    return [pr, vg, gr]


def _risk_for_k(panel, k, cfg, stations, t, vario):
    est = FailureProbabilityEstimator(k, cfg.bandwidth, cfg.grid_points).fit(panel)
    res = est.query(t, stations, cfg.risk_level, *vario)
    return k, res


def stage_risk(ws: Workspace) -> list[Path]:
    cfg = ws.cfg
    panel = _declustered(ws, "risk")
    if not cfg.risk_stations or cfg.risk_level is None:
        raise UsageError("risk needs --station ID (once or twice) and --level MM")
    if len(cfg.risk_stations) > 2:
        raise UsageError("risk takes one or two --station options")
    try:
        stations = [panel.station_index(s) for s in cfg.risk_stations]
    except (KeyError, ValueError):
        raise UsageError(f"unknown station in {cfg.risk_stations}") from None
    vario = (None, None)
    if len(stations) == 2:
        params, unit = _variogram(ws, "joint risk")
        if panel.planar_coords is None:
            raise DataError("stations.csv has no planar coordinates; re-run `stpot ingest`")
        lag = (panel.planar_coords[stations[0]] - panel.planar_coords[stations[1]]) / unit
        vario = (params, lag)
    ks = cfg.risk_ks or [cfg.k]
    t = np.linspace(0.0, 1.0, cfg.t_grid)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = list(pool.map(lambda k: _risk_for_k(panel, k, cfg, stations, t, vario), ks))
    rows = []
    for k, res in results:
        for s, sid in zip(stations, cfg.risk_stations):
            rows.extend((k, ti, sid, p) for ti, p in zip(t, res.p_marginal[s]))
        if res.p_joint is not None:
            label = "&".join(cfg.risk_stations)
            rows.extend((k, ti, label, p) for ti, p in zip(t, res.p_joint))
    out = ws.write_table(ARTIFACTS["risk"], "risk", ["k", "t", "station", "p"], rows,
                         [f"level: {_fmt(cfg.risk_level)}"])
    return [out]


def _summary(ws: Workspace) -> str:
    tf = read_keyvalue(ws.path(ARTIFACTS["fit-tail"]))
    season = read_header(ws.path(ARTIFACTS["fit-tail"])).get("season", "")
    lines = ["Tail estimates", "",
             f"{'season':<8}{'k':>8}{'threshold':>14}{'gamma_hat':>14}{'a_hat':>14}",
             f"{season:<8}{tf['k']:>8}{float(tf['threshold']):>14.6g}"
             f"{float(tf['gamma_hat']):>14.6g}{float(tf['scale_hat']):>14.6g}", ""]
    tt = ws.path(ARTIFACTS["test-trend"])
    if tt.exists():
        meta = read_header(tt)
        lines += ["Homogeneity tests", "",
                  f"null mode {meta['null_mode']}, Bonferroni level {meta['bonferroni_level']}",
                  f"stations rejected: space {meta['rejected_j1']}, time {meta['rejected_j2']}", ""]
    vg = ws.path(ARTIFACTS["fit-variogram"])
    if vg.exists():
        d = read_keyvalue(vg)
        names = ("b1", "b2", "theta", "alpha")
        se = [float(d[f"se_{n}"]) for n in names]
        pv = [float(d[f"p_{n}"]) for n in names]
        lines += ["Variogram estimates", "",
                  f"{'':<10}" + "".join(f"{n:>14}" for n in names),
                  f"{'estimate':<10}" + "".join(f"{float(d[n]):>14.6g}" for n in names),
                  f"{'std.err':<10}" + "".join(f"{v:>14.6g}" for v in se),
                  f"{'p-value':<10}" + "".join(f"{v:>14.6g}" for v in pv),
                  f"pairs used {d['n_pairs']}, lag unit {d['lag_unit_km']} km", ""]
    return "\n".join(lines)


def stage_report(ws: Workspace) -> list[Path]:
    ws.require("fit-tail", "report")
    dest = ws.path("report")
    dest.mkdir(parents=True, exist_ok=True)
    copied = []
    for name in (*ARTIFACTS.values(), *SECONDARY):
        src = ws.path(name)
        if src.exists():
            shutil.copyfile(src, dest / name)
            copied.append(dest / name)
    missing = [s for s, a in ARTIFACTS.items() if not ws.path(a).exists()]
    body = _summary(ws)
    if missing:
        body += "\nStages without artifacts: " + ", ".join(missing) + "\n"
    copied.append(ws.write_text("report/summary.txt", "report", body))
    return copied


STAGES = {
    "simulate": stage_simulate,
    "ingest": stage_ingest,
    "decluster": stage_decluster,
    "fit-tail": stage_fit_tail,
    "scedasis": stage_scedasis,
    "test-trend": stage_test_trend,
    "homogenize": stage_homogenize,
    "fit-variogram": stage_fit_variogram,
    "risk": stage_risk,
    "report": stage_report,
}

def _plot(stage: str, ws: Workspace) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("--plot needs matplotlib (pip install 'stpot[plot]')") from None
    fig, ax = plt.subplots(figsize=(6, 4))
    if stage == "fit-tail":
        header, rows = read_table(ws.path("gamma_trace.csv"))
        ax.plot([float(r[0]) for r in rows], [float(r[header.index("gamma_hat")]) for r in rows])
        ax.set(xlabel="k", ylabel="gamma_hat")
    elif stage == "scedasis":
        header, rows = read_table(ws.path(ARTIFACTS["scedasis"]))
        series = {}
        for r in rows:
            series.setdefault(r[1], ([], []))
            series[r[1]][0].append(float(r[0]))
            series[r[1]][1].append(float(r[3]))
        for t, c in series.values():
            ax.plot(t, c, lw=0.6)
        ax.set(xlabel="t", ylabel="m c_hat")
    elif stage == "fit-variogram":
        header, rows = read_table(ws.path("pairs.csv"))
        ok = [r for r in rows if r[7] == "false"]
        ax.scatter([float(r[2]) for r in ok], [float(r[6]) for r in ok], s=4)
        ax.set(xlabel="distance (km)", ylabel="v_hat")
    elif stage == "risk":
        header, rows = read_table(ws.path(ARTIFACTS["risk"]))
        series = {}
        for r in rows:
            series.setdefault((r[0], r[2]), ([], []))
            series[(r[0], r[2])][0].append(float(r[1]))
            series[(r[0], r[2])][1].append(float(r[3]))
        for (k, s), (t, p) in series.items():
            ax.plot(t, p, label=f"{s}, k={k}")
        ax.set(xlabel="t", ylabel="failure probability")
        ax.legend(fontsize=6)
    else:
        plt.close(fig)
        return
    fig.tight_layout()
    fig.savefig(ws.path(f"{stage}.png"), dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------------- CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="INI config file; flags override its values")
    g.add_argument("--output-dir", dest="output_dir",
                   help=f"artifact directory (env {OUTPUT_ENV}; default stpot_out)")
    g.add_argument("--threads", type=int, help="maximum worker threads")
    g.add_argument("--plot", action="store_const", const=True,
                   help="also render a PNG of the stage output")
    g.add_argument("--stations", help="station catalog CSV")
    g.add_argument("--observations", help="daily observations CSV")
    g.add_argument("--season", choices=("cold", "warm", "all"))
    g.add_argument("--k", type=int, help="number of pooled top order statistics")
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--grid-points", dest="grid_points", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--null-mode", dest="null_mode", choices=NULL_MODES)
    g.add_argument("--lag-days", dest="lag_days", type=int)
    g.add_argument("--decluster-target", dest="decluster_target", type=int)
    g.add_argument("--min-pairs", dest="min_pairs", type=int)
    g.add_argument("--censor-eps", dest="censor_eps", type=float)
    g.add_argument("--lag-unit-km", dest="lag_unit_km", type=float)
    g.add_argument("--spec", help="synthetic panel spec (JSON)")
    r = common.add_argument_group("risk options")
    r.add_argument("--station", dest="risk_stations", action="append", default=[])
    r.add_argument("--level", dest="risk_level", type=float, help="level x_n in mm")
    r.add_argument("--risk-k", dest="risk_ks", type=int, action="append", default=[],
                   help="k for the risk curves (repeatable; default --k)")
    r.add_argument("--t-grid", dest="t_grid", type=int, help="number of time points")

    parser = _Parser(prog="stpot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stpot {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "simulate": "draw a synthetic panel in the ingest format",
        "ingest": "read stations and observations, select the season",
        "decluster": "thin the panel to separated high days",
        "fit-tail": "unified threshold, gamma and scale; gamma-vs-k trace",
        "scedasis": "kernel estimate of the trend c(t, s)",
        "test-trend": "space and time homogeneity tests",
        "homogenize": "map exceedances to a stationary sample",
        "fit-variogram": "pairwise tail dependence and variogram fit",
        "risk": "marginal and joint failure probabilities over time",
        "report": "bundle artifacts with a summary table",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


# upstream artifacts each stage reads, in pipeline order
PREREQUISITES = {
    "decluster": ("ingest",),
    "fit-tail": ("decluster",),
    "scedasis": ("decluster", "fit-tail"),
    "test-trend": ("decluster", "fit-tail", "scedasis"),
    "homogenize": ("decluster", "fit-tail", "scedasis"),
    "fit-variogram": ("decluster", "fit-tail", "scedasis", "homogenize"),
    "risk": ("decluster", "fit-tail", "scedasis", "homogenize"),
    "report": ("fit-tail",),
}


def run(command: str, cfg: PipelineConfig) -> list[Path]:
    ws = Workspace(cfg)
    for stage in PREREQUISITES.get(command, ()):
        ws.require(stage, command)
    paths = STAGES[command](ws)
    if cfg.plot and command not in ("simulate", "report"):
        _plot(command, ws)
    return paths


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, cat, *a, **k: print(
                f"warning: {msg}", file=sys.stderr)
            paths = run(args.command, cfg)
    except UsageError as exc:
        print(f"stpot {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, UnicodeDecodeError, KeyError) as exc:
        print(f"stpot {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DegenerateSampleError, TrendSupportError, FloatingPointError,
            ValueError) as exc:
        print(f"stpot {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
