import math
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from syncsgd.bench import cli, harness
from syncsgd.bench.spec import ConfigError, ExperimentSpec, Point, load_spec, parse_int_list
from syncsgd.coord.run import REPORT_FIELDS, EpochReport

CONFIG = """
[experiment]
arch = ra, ps
workers = 2,3
repetitions = 2
math = false

[train]
batch = 100
epochs = 2

[data]
n = 3000

[link]
bandwidth = 5e8

[calibration]
t_processing = 0.004
ps_time = 0.001
update_time = 0.001
"""


def report(**kw):
    base = dict(arch="ra", backend="sim", w=2, ps=0, sizing="exact", repetition=0, epoch=0,
                n=1000, batch=100, iterations=5, model_bytes=437544, epoch_time=0.5,
                throughput=2000.0)
    base.update(kw)
    return EpochReport(**base)


floats = st.floats(min_value=1e-9, max_value=1e9, allow_nan=False)
reports = st.builds(report, arch=st.sampled_from(["ps", "p2p", "ra"]),
                    backend=st.sampled_from(["sim", "tcp"]), w=st.integers(1, 64),
                    epoch_time=floats, throughput=floats, compute=floats, barrier=floats,
                    messages=st.integers(0, 10**6), loss=floats | st.just(math.nan))


def six(v):
    return float("%.6g" % v) if isinstance(v, float) else v


@pytest.mark.parametrize("fmt", ["csv", "json"])
@given(rows=st.lists(reports, max_size=5))
def test_emit_parse_roundtrip(fmt, rows):
    parsed = harness.parse(harness.render(rows, fmt), fmt)
    assert len(parsed) == len(rows)
    for got, r in zip(parsed, rows):
        for f in REPORT_FIELDS:
            want = six(getattr(r, f))
            if isinstance(want, float) and math.isnan(want):
                assert math.isnan(got[f])
            else:
                assert got[f] == want


def test_header_and_empty_file(tmp_path):
    path = tmp_path / "sub" / "r.csv"
    text = harness.emit([], "csv", path)
    assert path.read_text() == text
    lines = text.splitlines()
    assert lines == ["# " + harness.REPORT_SCHEMA, ",".join(REPORT_FIELDS)]
    assert harness.parse(text) == []
    assert harness.parse(harness.render([], "json"), "json") == []


def test_emit_io_error(tmp_path):
    (tmp_path / "f").write_text("")
    with pytest.raises(OSError):
        harness.emit([report()], "csv", tmp_path / "f" / "x.csv")


def test_config_precedence(tmp_path):
    cfg = tmp_path / "e.ini"
    cfg.write_text(CONFIG)
    spec = load_spec(cfg)
    assert spec.train.batch_size == 100 and spec.link.total_bandwidth == 5e8
    assert [(p.arch, p.w) for p in spec.points] == [("ra", 2), ("ra", 3), ("ps", 2), ("ps", 3)]
    spec = load_spec(cfg, {"batch": 50, "workers": "4", "arch": "p2p", "bandwidth": 1e9})
    assert spec.train.batch_size == 50 and spec.link.total_bandwidth == 1e9
    assert spec.points == (Point("p2p", 4),)
    default = load_spec(None)
    assert default.train.batch_size == 100 and default.backend == "sim"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.ini")
    with pytest.raises(ConfigError):
        load_spec(None, {"arch": "tree"})
    with pytest.raises(ConfigError):
        load_spec(None, {"repetitions": 0})
    with pytest.raises(ConfigError):
        load_spec(None, {"workers": "x"})
    with pytest.raises(ConfigError):
        ExperimentSpec(points=())
    assert parse_int_list("1-3, 7") == [1, 2, 3, 7]


def test_sweep_rows_and_repetitions(tmp_path):
    cfg = tmp_path / "e.ini"
    cfg.write_text(CONFIG)
    spec = load_spec(cfg)
    out = harness.run(spec)
    assert len(out) == len(spec.points) * spec.repetitions * spec.train.epochs
    by_rep = {}
    for r in out:
        row = r.as_row()
        by_rep.setdefault(row.pop("repetition"), []).append(row)
    assert by_rep[0] == by_rep[1]


def test_compare_table(tmp_path):
    spec = load_spec(None, {"arch": "ra,ps", "workers": "2,4", "math": "false", "n": 4000})
    out = harness.run(spec)
    rows = harness.compare(out, harness.predictions_for(spec, 4000), spec.calibration,
                           spec.t_single)
    for row in rows:
        assert row["rel_error"] == pytest.approx(
            abs(row["measured_time"] - row["predicted_time"]) / row["predicted_time"])
        assert row["check"] in ("pass", "fail") and math.isnan(row["model_gap"])
        assert row["t_processing"] == spec.calibration.t_processing
    text = harness.render(rows, "csv", harness.COMPARE_FIELDS)
    assert text.startswith("# " + harness.COMPARE_SCHEMA)
    parsed = harness.parse(text)
    for p in parsed:
        # columns carry 6 significant digits, so agreement is to that precision
        assert p["rel_error"] == pytest.approx(
            abs(p["measured_time"] - p["predicted_time"]) / p["predicted_time"],
            rel=1e-5, abs=2e-6)


def test_compare_errors_and_tcp_rows():
    spec = load_spec(None, {"arch": "ra", "workers": "2"})
    preds = harness.predictions_for(spec)
    with pytest.raises(harness.CompareError):
        harness.compare([report()], {}, spec.calibration)
    with pytest.raises(harness.CompareError):
        harness.compare([], preds, spec.calibration)
    with pytest.raises(harness.CompareError, match="w=3"):
        harness.compare([report(w=3)], preds, spec.calibration)
    (row,) = harness.compare([report(backend="tcp", n=6000)], preds, spec.calibration)
    assert row["check"] == "" and row["model_gap"] == pytest.approx(0.5 - row["predicted_time"])


def test_ra_throughput_grows_with_w():
    spec = load_spec(None, {"arch": "ra", "workers": "2,4,8", "n": 6000})
    thr = [r.throughput for r in harness.run(spec)]
    assert thr[0] < thr[1] < thr[2]


def test_ps_saturates_when_bandwidth_bound():
    spec = load_spec(None, {"arch": "ps", "workers": "1-8", "math": "false", "n": 6000,
                            "bandwidth": 2e7})
    thr = [r.throughput for r in harness.run(spec)]
    assert thr[7] < 1.1 * thr[3]
    assert max(thr) < 1.2 * thr[1]


def test_run_error_names_point(monkeypatch):
    from syncsgd.coord.config import StragglerTimeout

    def boom(*a, **k):
        raise StragglerTimeout("rank 1 silent", ranks=(1,))

    monkeypatch.setattr(harness, "run_sim", boom)
    spec = load_spec(None, {"arch": "p2p", "workers": "3", "math": "false"})
    with pytest.raises(harness.ExperimentError, match="p2p w=3"):
        harness.run(spec)
    assert cli.main(["run", "--arch", "p2p", "--workers", "3", "--no-math"]) == cli.EXIT_PROTOCOL


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--arch", "tree"]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert cli.main(["compare", str(tmp_path / "nope.csv")]) == cli.EXIT_IO
    empty = tmp_path / "empty.csv"
    harness.emit([], "csv", empty)
    assert cli.main(["compare", str(empty)]) == cli.EXIT_COMPARE


def test_cli_run_compare_predict(tmp_path, capsys):
    out, cmp_ = tmp_path / "r.csv", tmp_path / "c.csv"
    args = ["--arch", "ps,p2p,ra", "--workers", "2,3", "--no-math", "--n", "3000",
            "--sizing", "paper-faithful"]
    assert cli.main(["run", *args, "--out", str(out), "--compare", str(cmp_),
                     "--json", str(tmp_path / "r.json")]) == 0
    rows = harness.parse(out.read_text())
    assert len(rows) == 6
    assert all(r["predicted_time"] > 0 for r in rows)
    assert len(harness.parse(cmp_.read_text())) == 6
    assert cli.main(["compare", *args, str(out)]) == 0
    assert capsys.readouterr().out.startswith("# " + harness.COMPARE_SCHEMA)
    assert cli.main(["predict", *args]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 7


def test_cli_subprocess_byte_identical(tmp_path):
    cfg = tmp_path / "e.ini"
    cfg.write_text(CONFIG.replace("math = false", "math = true").replace(
        "epochs = 2", "epochs = 2\ntopology = 20, 16, 4").replace(
        "n = 3000", "n = 600\nd = 20\nk = 4"))
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        subprocess.run([sys.executable, "-m", "syncsgd", "run", "-c", str(cfg), "--out",
                        str(path)], check=True)
        outs.append(path.read_bytes())
    rows = harness.parse(outs[0].decode())
    assert outs[0] == outs[1] and len(rows) == 16
    assert all(not math.isnan(r["loss"]) for r in rows)
