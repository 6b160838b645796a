import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stpot.ingest import (DataError, ObservationPanel, StationRecord, equirectangular,
                          load_observations, load_panel, load_stations, project_coordinates,
                          save_panel, save_stations, select_season)

from conftest import make_panel, stations

CATALOG = """station_id,name,longitude,latitude,altitude
00123,Alpha,7.1,52.0,40
00456,Beta,8.2,52.5,12
00789,Gamma,9.0,53.1,
"""


def test_load_three_stations(write):
    recs = load_stations(write("s.csv", CATALOG))
    assert [r.station_id for r in recs] == ["00123", "00456", "00789"]
    assert recs[1].longitude == 8.2 and math.isnan(recs[2].altitude)


def test_semicolon_catalog(write):
    recs = load_stations(write("s.csv", CATALOG.replace(",", ";")))
    assert len(recs) == 3


def test_duplicate_station_named(write):
    text = CATALOG + "00123,Again,7.0,51.0,3\n"
    with pytest.raises(DataError, match="00123"):
        load_stations(write("s.csv", text))


def test_latitude_out_of_range(write):
    with pytest.raises(DataError, match="latitude"):
        load_stations(write("s.csv", CATALOG + "00999,Bad,7.0,91.0,1\n"))


def test_missing_column(write):
    with pytest.raises(DataError, match="missing columns"):
        load_stations(write("s.csv", "station_id,name\n1,a\n"))


def _obs(rows):
    return "station_id,date,precip_mm\n" + "".join(f"{s},{d},{v}\n" for s, d, v in rows)


def _two():
    return [StationRecord("A", "a", 7.0, 52.0), StationRecord("B", "b", 8.0, 52.0)]


def test_full_panel(write):
    rows = [(s, f"2000-01-0{d}", d + (s == "B")) for d in (1, 2, 3) for s in "AB"]
    panel = load_observations(write("o.csv", _obs(rows)), _two())
    assert panel.values.shape == (3, 2)
    assert panel.missing.sum() == 0
    np.testing.assert_array_equal(panel.values[:, 1], [2, 3, 4])


def test_one_missing_cell(write):
    rows = [(s, f"2000-01-0{d}", 1.0) for d in (1, 2, 3) for s in "AB"][:-1]
    panel = load_observations(write("o.csv", _obs(rows)), _two())
    assert panel.values.shape == (3, 2)
    assert panel.missing.sum() == 1 and panel.n_observed == 5


def test_negative_value_rejected(write):
    with pytest.raises(DataError, match=":3"):
        load_observations(write("o.csv", _obs([("A", "2000-01-01", 1), ("B", "2000-01-01", -1.0)])),
                          _two())


def test_unknown_station_and_bad_date(write):
    with pytest.raises(DataError, match="unknown station"):
        load_observations(write("o.csv", _obs([("Z", "2000-01-01", 1)])), _two())
    with pytest.raises(DataError, match="date"):
        load_observations(write("o.csv", _obs([("A", "2000-13-01", 1)])), _two())


def test_quality_flag_marks_missing(write):
    text = ("station_id,date,precip_mm,quality_flag\n"
            "A,2000-01-01,3.0,0\nB,2000-01-01,4.0,1\n")
    panel = load_observations(write("o.csv", text), _two())
    assert panel.values[0, 0] == 3.0 and np.isnan(panel.values[0, 1])


def test_panel_is_read_only():
    panel = make_panel(np.ones((3, 2)))
    with pytest.raises(ValueError):
        panel.values[0, 0] = 2.0


def _year(start, n, m=2):
    return make_panel(np.ones((n, m)), start=start)


def test_cold_season_day_count():
    assert select_season(_year("2001-01-01", 365), "cold").n_days == 151


def test_july_only():
    july = _year("2001-07-01", 31)
    with pytest.raises(DataError):
        select_season(july, "cold")
    warm = select_season(july, "warm")
    np.testing.assert_array_equal(warm.values, july.values)
    np.testing.assert_array_equal(warm.dates, july.dates)


def test_season_idempotent():
    p = _year("2000-01-01", 800)
    once = select_season(p, "cold")
    assert select_season(once, "cold").equals(once)


def test_projection_examples():
    assert np.allclose(equirectangular([StationRecord("a", "a", 8.0, 52.0)]), 0.0)
    xy = equirectangular([StationRecord("a", "a", 8.0, 52.0), StationRecord("b", "b", 9.0, 52.0)])
    assert abs(xy[1, 0] - xy[0, 0]) == pytest.approx(6371 * math.cos(math.radians(52)) * math.pi / 180)
    assert abs(xy[1, 0] - xy[0, 0]) == pytest.approx(68.46, abs=0.01)
    assert xy[1, 1] == xy[0, 1]
    xy = equirectangular([StationRecord("a", "a", 8.0, 52.0), StationRecord("b", "b", 8.0, 53.0)])
    assert abs(xy[1, 1] - xy[0, 1]) == pytest.approx(111.19, abs=0.01)


def test_projected_distances_symmetric():
    p = project_coordinates(make_panel(np.ones((2, 6))))
    xy = p.planar_coords
    d = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
    np.testing.assert_array_equal(d, d.T)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.one_of(st.none(), st.floats(0, 500, allow_nan=False)),
                         min_size=3, max_size=3), min_size=1, max_size=12))
def test_panel_cache_round_trip(tmp_path_factory, rows):
    vals = np.array([[np.nan if v is None else v for v in r] for r in rows])
    panel = make_panel(vals, start="1999-12-30")
    path = tmp_path_factory.mktemp("cache") / "p.csv"
    save_panel(panel, path, ["note: x"])
    back = load_panel(path, panel.stations)
    assert back.equals(panel)
    np.testing.assert_array_equal(back.missing, panel.missing)


def test_station_cache_with_coordinates(tmp_path):
    p = project_coordinates(make_panel(np.ones((1, 3))))
    save_stations(p.stations, tmp_path / "s.csv", p.planar_coords)
    back = load_stations(tmp_path / "s.csv")
    assert [s.station_id for s in back] == p.station_ids


def test_panel_shape_mismatch():
    with pytest.raises(DataError):
        ObservationPanel(stations(2), np.array(["2000-01-01"], dtype="datetime64[D]"),
                         np.ones((2, 2)))
