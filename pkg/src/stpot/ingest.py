"""Station catalogs, daily observation files and the space-time panel."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

EARTH_RADIUS_KM = 6371.0
SEASON_MONTHS = {
    "cold": (11, 12, 1, 2, 3),
    "warm": (5, 6, 7, 8, 9),
    "all": tuple(range(1, 13)),
}
MISSING = "NA"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class StationRecord:
    station_id: str
    name: str
    longitude: float
    latitude: float
    altitude: float = float("nan")

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"station {self.station_id}: latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"station {self.station_id}: longitude {self.longitude} out of range")


@dataclass(frozen=True, eq=False)
class ObservationPanel:
    """Dense n x m panel of daily totals; ``NaN`` marks a missing cell.

    Arrays are made read-only on construction so a panel can be shared
    between threads.
    """

    stations: tuple
    dates: np.ndarray
    values: np.ndarray
    season: str = "all"
    planar_coords: np.ndarray | None = field(default=None)

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("panel values must be a 2-d array")
        n, m = values.shape
        if len(dates) != n:
            raise DataError(f"{len(dates)} dates for {n} panel rows")
        if len(self.stations) != m:
            raise DataError(f"{len(self.stations)} stations for {m} panel columns")
        if n < 1 or m < 1:
            raise DataError("panel must have at least one day and one station")
        if n > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise DataError("panel dates must be strictly increasing")
        if np.any(values[~np.isnan(values)] < 0):
            raise DataError("negative precipitation value in panel")
        if self.season not in SEASON_MONTHS:
            raise DataError(f"unknown season {self.season!r}")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        if self.planar_coords is not None:
            xy = np.array(self.planar_coords, dtype=float).reshape(m, 2)
            xy.setflags(write=False)
            object.__setattr__(self, "planar_coords", xy)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_stations(self) -> int:
        return self.values.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    @property
    def station_ids(self) -> list:
        return [s.station_id for s in self.stations]

    def station_index(self, station_id: str) -> int:
        try:
            return self.station_ids.index(station_id)
        except ValueError:
            raise KeyError(f"unknown station {station_id!r}") from None

    def time_fractions(self) -> np.ndarray:
        """i/n for the panel rows, i = 1..n."""
        n = self.n_days
        return np.arange(1, n + 1) / n

    def equals(self, other: "ObservationPanel") -> bool:
        return (
            self.station_ids == other.station_ids
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and self.season == other.season
        )


def _sniff_reader(text: str):
    first = text.splitlines()[0] if text else ""
    delim = ";" if first.count(";") > first.count(",") else ","
    return csv.reader(io.StringIO(text), delimiter=delim)


def _read_table(path, required):
    text = Path(path).read_text(encoding="utf-8-sig")
    reader = _sniff_reader(text)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    cols = {name: header.index(name) for name in header}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, {name: row[i].strip() for name, i in cols.items()}


def load_stations(path) -> list[StationRecord]:
    """Read a station catalog (comma or semicolon delimited, with header)."""
    records = []
    seen = set()
    for lineno, row in _read_table(
        path, ("station_id", "name", "longitude", "latitude", "altitude")
    ):
        sid = row["station_id"]
        if sid in seen:
            raise DataError(f"{path}:{lineno}: duplicate station_id {sid!r}")
        seen.add(sid)
        try:
            lon = float(row["longitude"])
            lat = float(row["latitude"])
            alt = float(row["altitude"]) if row["altitude"] else float("nan")
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        try:
            records.append(StationRecord(sid, row["name"], lon, lat, alt))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return records


def load_observations(path, catalog) -> ObservationPanel:
    """Read daily observations into a dense panel over the union of dates.

    Cells without a row, and rows with a nonzero quality flag, are missing.
    """
    index = {s.station_id: j for j, s in enumerate(catalog)}
    cells = {}
    for lineno, row in _read_table(path, ("station_id", "date", "precip_mm")):
        sid = row["station_id"]
        if sid not in index:
            raise DataError(f"{path}:{lineno}: unknown station {sid!r}")
        try:
            day = np.datetime64(row["date"], "D")
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparsable date {row['date']!r}") from None
        flag = row.get("quality_flag", "") or "0"
        raw = row["precip_mm"]
        if raw in ("", MISSING):
            value = math.nan
        else:
            try:
                value = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad value {raw!r}") from None
            if value < 0:
                raise DataError(f"{path}:{lineno}: negative precipitation {value}")
        try:
            if float(flag) != 0:
                value = math.nan
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad quality flag {flag!r}") from None
        cells[(day, index[sid])] = value
    if not cells:
        raise DataError(f"{path}: no observations")
    dates = np.array(sorted({d for d, _ in cells}), dtype="datetime64[D]")
    pos = {d: i for i, d in enumerate(dates)}
    values = np.full((len(dates), len(catalog)), np.nan)
    for (d, j), v in cells.items():
        values[pos[d], j] = v
    return ObservationPanel(tuple(catalog), dates, values)


def months_of(dates: np.ndarray) -> np.ndarray:
    return dates.astype("datetime64[M]").astype(int) % 12 + 1


def select_season(panel: ObservationPanel, season: str) -> ObservationPanel:
    """Keep the days of a season; rows are re-indexed consecutively."""
    if season not in SEASON_MONTHS:
        raise ValueError(f"unknown season {season!r}")
    keep = np.isin(months_of(panel.dates), SEASON_MONTHS[season])
    if not keep.any():
        raise DataError(f"no days left after selecting the {season} season")
    return replace(panel, dates=panel.dates[keep], values=panel.values[keep], season=season)


def project_coordinates(panel: ObservationPanel, radius_km: float = EARTH_RADIUS_KM) -> ObservationPanel:
    """Attach local equirectangular (x, y) km coordinates about the centroid."""
    return replace(panel, planar_coords=equirectangular(panel.stations, radius_km))


def equirectangular(stations, radius_km: float = EARTH_RADIUS_KM) -> np.ndarray:
    lon = np.radians([s.longitude for s in stations])
    lat = np.radians([s.latitude for s in stations])
    if np.any(np.isnan(lon)) or np.any(np.isnan(lat)):
        raise DataError("station without coordinates")
    phi0 = lat.mean()
    x = radius_km * np.cos(phi0) * (lon - lon.mean())
    y = radius_km * (lat - lat.mean())
    return np.column_stack([x, y])


# Panel cache: one header row "date,<station ids...>", one row per day, NA for missing.


def save_panel(panel: ObservationPanel, path, header_lines=()) -> None:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(f"# season: {panel.season}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", *panel.station_ids])
    for d, row in zip(panel.dates, panel.values):
        w.writerow([str(d), *(MISSING if np.isnan(v) else repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_panel(path, catalog) -> ObservationPanel:
    season = "all"
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip() == "season":
                season = val.strip()
        else:
            body.append(line)
    rows = list(csv.reader(body))
    header = rows[0]
    by_id = {s.station_id: s for s in catalog}
    try:
        stations = tuple(by_id[sid] for sid in header[1:])
    except KeyError as exc:
        raise DataError(f"{path}: station {exc.args[0]!r} not in catalog") from None
    dates = np.array([r[0] for r in rows[1:]], dtype="datetime64[D]")
    values = np.array(
        [[np.nan if c == MISSING else float(c) for c in r[1:]] for r in rows[1:]], dtype=float
    )
    return ObservationPanel(stations, dates, values.reshape(len(dates), len(stations)), season)


def save_stations(stations, path, planar_coords=None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["station_id", "name", "longitude", "latitude", "altitude"]
    if planar_coords is not None:
        cols += ["x_km", "y_km"]
    w.writerow(cols)
    for j, s in enumerate(stations):
        row = [s.station_id, s.name, repr(s.longitude), repr(s.latitude), repr(s.altitude)]
        if planar_coords is not None:
            row += [repr(float(planar_coords[j, 0])), repr(float(planar_coords[j, 1]))]
        w.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
