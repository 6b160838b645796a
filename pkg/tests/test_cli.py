import subprocess
import sys

import numpy as np
import pytest

from stpot import cli
from stpot.ingest import equirectangular
from stpot.synth import SynthSpec, grid_stations

STAGES = ["decluster", "fit-tail", "scedasis", "test-trend", "homogenize", "fit-variogram"]


def _spec(path, m=9, n=6000):
    xy = equirectangular(grid_stations(m))
    d = np.hypot(*(xy[:, None] - xy[None]).transpose(2, 0, 1))
    spec = SynthSpec(n=n, m=m, gamma=0.1, c_kind="linear", c_params=(1.0, 1.0),
                     dependence="gaussian", rho=np.exp(-d / 150.0).tolist(), seed=4)
    path.write_text(spec.to_json())
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    out = root / "out"
    common = ["--output-dir", str(out)]
    assert cli.main(["simulate", "--spec", str(_spec(root / "spec.json"))] + common) == 0
    assert cli.main(["ingest", "--stations", str(out / "simulated_stations.csv"),
                     "--observations", str(out / "simulated_observations.csv"),
                     "--season", "all"] + common) == 0
    for stage in STAGES:
        assert cli.main([stage, "--k", "1000", "--lag-days", "1"] + common) == 0, stage
    assert cli.main(["risk", "--k", "1000", "--station", "S001", "--station", "S002",
                     "--level", "80", "--risk-k", "600", "--risk-k", "1000", "--t-grid", "11",
                     "--threads", "2"] + common) == 0
    assert cli.main(["report", "--k", "1000"] + common) == 0
    return out


def test_report_bundles_eight_stage_artifacts(pipeline):
    report = pipeline / "report"
    stage_files = [report / name for name in cli.ARTIFACTS.values()]
    assert len(stage_files) == 8
    assert all(p.exists() for p in stage_files)
    summary = (report / "summary.txt").read_text()
    assert "threshold" in summary and "gamma_hat" in summary and "b1" in summary
    assert "Stages without artifacts" not in summary


def test_artifacts_carry_config_hash(pipeline):
    for name in cli.ARTIFACTS.values():
        head = cli.read_header(pipeline / name)
        assert len(head["config_hash"]) == 16


def test_scedasis_long_format(pipeline):
    header, rows = cli.read_table(pipeline / "scedasis.csv")
    assert header == ["t", "station_id", "c_hat", "m_c_hat"]
    assert len(rows) == 9 * 201
    r = rows[500]
    assert float(r[3]) == pytest.approx(9 * float(r[2]))


def test_trend_columns(pipeline):
    header, rows = cli.read_table(pipeline / "trend_tests.csv")
    assert {"t_j1", "p_j1", "t_j2", "sigma_star", "argsup_t", "p_j2"} <= set(header)
    assert len(rows) == 9


def test_risk_curves(pipeline):
    header, rows = cli.read_table(pipeline / "risk.csv")
    assert header == ["k", "t", "station", "p"]
    keys = {(r[0], r[2]) for r in rows}
    assert keys == {(k, s) for k in ("600", "1000") for s in ("S001", "S002", "S001&S002")}
    joint = {(r[0], r[1]): float(r[3]) for r in rows if r[2] == "S001&S002"}
    marg = {(r[0], r[1]): float(r[3]) for r in rows if r[2] == "S001"}
    assert all(joint[key] <= marg[key] + 1e-15 for key in joint)


def test_rerun_is_byte_identical(pipeline):
    before = {n: (pipeline / n).read_bytes() for n in ("scedasis.csv", "homogenized.csv",
                                                       "tailfit.txt", "variogram.txt")}
    for stage in ("fit-tail", "scedasis", "homogenize", "fit-variogram"):
        assert cli.main([stage, "--k", "1000", "--lag-days", "1",
                         "--output-dir", str(pipeline)]) == 0
    for n, data in before.items():
        assert (pipeline / n).read_bytes() == data, n


def test_missing_prerequisite(tmp_path, capsys):
    out = tmp_path / "o"
    out.mkdir()
    (out / "declustered.csv").write_text("date,A\n")
    (out / "tailfit.txt").write_text("k: 1\n")
    (out / "stations.csv").write_text("station_id,name,longitude,latitude,altitude\nA,a,1,1,1\n")
    assert cli.main(["test-trend", "--output-dir", str(out)]) == cli.EXIT_USAGE
    assert "stpot scedasis" in capsys.readouterr().err


def test_first_stage_missing(tmp_path, capsys):
    assert cli.main(["decluster", "--output-dir", str(tmp_path)]) == cli.EXIT_USAGE
    assert "stpot ingest" in capsys.readouterr().err


def test_exit_codes(tmp_path, pipeline):
    out = ["--output-dir", str(tmp_path / "x")]
    assert cli.main(["fit-tail", "--k", "1"] + out) == cli.EXIT_USAGE
    assert cli.main(["ingest", "--stations", str(tmp_path / "none.csv"),
                     "--observations", str(tmp_path / "none.csv")] + out) == cli.EXIT_DATA
    bad = tmp_path / "obs.csv"
    bad.write_text("station_id,date,precip_mm\nS001,2000-01-01,-3\n")
    assert cli.main(["ingest", "--stations", str(pipeline / "simulated_stations.csv"),
                     "--observations", str(bad)] + out) == cli.EXIT_DATA
    assert cli.main(["fit-tail", "--k", "10000000", "--output-dir", str(pipeline)]) \
        == cli.EXIT_NUMERIC
    assert cli.main(["risk", "--output-dir", str(pipeline)]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit-tail", "--no-such-flag"])
    assert exc.value.code == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE


def test_config_file_and_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[paths]\noutput_dir = from_file\n[analysis]\nk = 500\nbandwidth = 0.2\n"
                   "null-mode = independence\n[risk]\nrisk_stations = A, B\nrisk_ks = 100, 200\n")
    parser = cli.build_parser()
    c = cli.resolve_config(parser.parse_args(["scedasis", "--config", str(cfg), "--k", "700"]))
    assert (c.k, c.bandwidth, c.null_mode, c.output_dir) == (700, 0.2, "independence", "from_file")
    assert c.risk_stations == ["A", "B"] and c.risk_ks == [100, 200]
    monkeypatch.setenv(cli.OUTPUT_ENV, "from_env")
    c = cli.resolve_config(parser.parse_args(["scedasis", "--config", str(cfg)]))
    assert c.output_dir == "from_env"
    c = cli.resolve_config(parser.parse_args(["scedasis", "--output-dir", "flag"]))
    assert c.output_dir == "flag"


def test_config_errors(tmp_path):
    parser = cli.build_parser()
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[analysis]\nkay = 5\n")
    with pytest.raises(cli.UsageError, match="kay"):
        cli.resolve_config(parser.parse_args(["scedasis", "--config", str(cfg)]))
    with pytest.raises(cli.UsageError):
        cli.resolve_config(parser.parse_args(["scedasis", "--config", str(tmp_path / "no.ini")]))


def test_hash_ignores_output_dir_only():
    a = cli.PipelineConfig(output_dir="a", threads=1)
    b = cli.PipelineConfig(output_dir="b", threads=4)
    assert a.hash() == b.hash()
    assert a.hash() != cli.PipelineConfig(k=10).hash()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "stpot.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for stage in ("ingest", "fit-variogram", "report", "simulate"):
        assert stage in res.stdout
