import numpy as np
import pytest

from stpot.ingest import ObservationPanel, StationRecord


def stations(m, lon0=8.0, lat0=52.0):
    return tuple(StationRecord(f"S{j}", f"site {j}", lon0 + 0.3 * j, lat0 + 0.2 * (j % 3))
                 for j in range(m))


def make_panel(values, start="2001-01-01", dates=None, season="all"):
    values = np.asarray(values, dtype=float)
    if dates is None:
        dates = np.datetime64(start, "D") + np.arange(values.shape[0])
    return ObservationPanel(stations(values.shape[1]), dates, values, season)


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return _write
