import json
import math
import os
import re

import numpy as np
import pytest

from escortlab import models as M
from escortlab.cli import main, run
from escortlab.errors import ConfigError
from escortlab.escort import PointSequence, cone_boundary, cone_margin_array, write_csv
from escortlab.plot import emit_plot
from escortlab.records import (ExperimentConfig, RunRecord, config_from_mapping, csv_text, jsonl_text,
                               parse_config_text, read_rows)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _jsonl(path):
    return [json.loads(line) for line in open(path, encoding="utf-8")]


# --- commands ----------------------------------------------------------------

def test_rotation_map_torus(tmp_path):
    out = tmp_path / "r"
    assert main(["rotation-map", "--out", str(out), "--set", "a=0.3", "--set", "b=0.1"]) == 0
    rec = _jsonl(out / "results.jsonl")[0]
    assert np.allclose(rec["vector"], [0.3, 0.1], atol=1e-12)
    record = RunRecord.from_json(open(out / "record.json").read())
    assert record.exit_status == 0
    assert record.outputs[0]["path"] == "results.jsonl"


def test_magnetic_supercritical(tmp_path):
    out = tmp_path / "m"
    assert main(["magnetic", "--out", str(out), "--set", "speed=2", "--horizon", "200"]) == 0
    rec = _jsonl(out / "classification.jsonl")[0]
    assert rec["regime"] == "supercritical"
    assert rec["escape_rate"] == pytest.approx(math.sqrt(3), rel=1e-12)
    assert rec["measured_escape_rate"] == pytest.approx(math.sqrt(3), rel=0.01)
    text = _read(out / "trajectory.csv")
    assert text.startswith(b"t,c1,c2\r\n")


def test_geometry_suite_small(tmp_path):
    out = tmp_path / "g"
    args = ["geometry-suite", "--out", str(out), "--format", "csv",
            "--set", "instances=300", "--set", "cone_instances=50", "--set", "busemann_instances=20"]
    assert main(args) == 0
    rows = read_rows(str(out / "results.csv"))
    assert rows and all(r["passed"] == "true" for r in rows)
    raw = _read(out / "results.csv")
    # RFC-4180 line ends throughout
    assert raw.count(b"\r\n") == raw.count(b"\n") == len(rows) + 1


# --- exit codes ----------------------------------------------------------------

def test_exit_config_errors(tmp_path):
    assert main(["rotation-map", "--out", str(tmp_path), "--set", "bogus=1"]) == 4
    assert main(["magnetic", "--out", str(tmp_path), "--set", "speed=oops"]) == 4
    assert main(["rotation-map", "--out", str(tmp_path), "--horizon", "-5"]) == 4
    assert main(["nonsense"]) == 4
    assert main([]) == 4
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\ncommand = rotation-map\n[inputs]\norbit = missing.csv\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 4


def test_exit_check_failure_writes_results(tmp_path):
    out = tmp_path / "c"
    # the measured circle cannot meet an impossible tolerance
    assert main(["magnetic", "--out", str(out), "--set", "speed=0.5", "--horizon", "20",
                 "--tolerance", "1e-300"]) == 2
    assert (out / "classification.jsonl").exists()
    assert RunRecord.from_json(open(out / "record.json").read()).exit_status == 2


def test_exit_visibility(tmp_path):
    assert main(["semiconj", "--out", str(tmp_path), "--set", "flow=warped-xshift", "--horizon", "500"]) == 2


def test_exit_numeric(tmp_path):
    # the user chart cannot represent the orbit this far out
    assert main(["magnetic", "--out", str(tmp_path), "--set", "speed=2", "--horizon", "400"]) == 3


# --- determinism and records -----------------------------------------------------

def test_outputs_byte_identical(tmp_path):
    args = ["past-future", "--set", "system=moebius", "--horizon", "400", "--format", "csv"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _read(tmp_path / "a" / "results.csv") == _read(tmp_path / "b" / "results.csv")
    ra = RunRecord.from_json(open(tmp_path / "a" / "record.json").read())
    rb = RunRecord.from_json(open(tmp_path / "b" / "record.json").read())
    assert ra.digest == rb.digest and ra.outputs == rb.outputs


def test_rerun_from_record(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["rotation-map", "--out", str(out), "--set", "system=perturbed-torus", "--horizon", "500"]) == 0
    assert main(["rerun", str(out / "record.json")]) == 0
    assert "identical" in capsys.readouterr().out


def test_digest_stable_under_reordering(tmp_path):
    a = parse_config_text("[run]\ncommand = rotation-map\nrng_seed = 3\n[params]\na = 0.3\nb = 0.1\n")
    b = parse_config_text("[params]\nb = 0.1\na = 0.3\n[run]\nrng_seed = 3\ncommand = rotation-map\n")
    assert a.digest() == b.digest()
    c = parse_config_text("[run]\ncommand = rotation-map\nrng_seed = 4\n[params]\na = 0.3\nb = 0.1\n")
    assert c.digest() != a.digest()
    # the canonical text parses back to the same digest
    assert parse_config_text(a.text()).digest() == a.digest()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config_from_mapping({"run": {"command": "magnetic", "colour": "red"}})
    with pytest.raises(ConfigError):
        config_from_mapping({"run": {"command": "magnetic"}, "extra": {}})
    with pytest.raises(ConfigError):
        ExperimentConfig("magnetic", params={"nope": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig("magnetic", horizon=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig("launch")


def test_orbit_input(tmp_path):
    n = np.arange(400, dtype=float)
    seq = PointSequence(M.EUCLIDEAN2, np.stack([0.5 * n, -0.25 * n], 1), n)
    write_csv(seq, str(tmp_path / "orbit.csv"))
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\ncommand = rotation-map\n[inputs]\norbit = orbit.csv\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rec = _jsonl(out / "results.jsonl")[0]
    assert np.allclose(rec["vector"], [0.5, -0.25], atol=1e-9)


def test_writers():
    text = csv_text([{"b": 1.5, "a": "x,y"}, {"a": 'q"', "b": math.inf}])
    assert text == 'a,b\r\n"x,y",1.5\r\n"q""",inf\r\n'
    line = jsonl_text([{"z": 1, "a": [1.0, 2.0], "n": "é"}])
    assert line == '{"a": [1.0, 2.0], "n": "é", "z": 1}\n'


# --- plots ------------------------------------------------------------------

def _poly_points(svg):
    m = re.search(r'<(?:polyline|polygon) points="([^"]*)"', svg)
    return np.array([[float(v) for v in p.split(",")] for p in m.group(1).split()])


def test_plot_magnetic_circle_inside_disk(tmp_path):
    out = tmp_path / "m"
    assert main(["magnetic", "--out", str(out), "--set", "speed=0.5", "--horizon", "8", "--model",
                 "poincare-disk"]) == 0
    svg1, svg2 = tmp_path / "a.svg", tmp_path / "b.svg"
    for s in (svg1, svg2):
        assert main(["plot", str(out / "trajectory.csv"), "--style", "disk", "--out", str(s)]) == 0
    assert _read(svg1) == _read(svg2)
    svg = svg1.read_text()
    pts = _poly_points(svg)
    c = re.search(r'<circle cx="([\d.]+)" cy="([\d.]+)" r="([\d.]+)"', svg)
    cx, cy, r = (float(c.group(i)) for i in (1, 2, 3))
    assert np.all(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) < r)
    # a closed curve: the orbit comes back to its start within one period
    assert np.hypot(*(pts[0] - pts[np.argmin(np.hypot(*(pts[50:] - pts[0]).T)) + 50])) < 2.0


def test_plot_empty_trajectory(tmp_path):
    src = tmp_path / "e.csv"
    src.write_text("t,c1,c2\r\n")
    out = tmp_path / "e.svg"
    assert main(["plot", str(src), "--out", str(out), "--model", "euclidean"]) == 0
    svg = out.read_text()
    assert "<line" in svg and "polyline" not in svg


def test_plot_parse_failure(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("t,c1,c2\r\n0,1,zebra\r\n")
    assert main(["plot", str(src), "--out", str(tmp_path / "x.svg"), "--model", "euclidean"]) == 4
    src.write_text("hello\n")
    assert main(["plot", str(src), "--out", str(tmp_path / "x.svg")]) == 4


def test_plot_cone_boundary(tmp_path):
    E = M.EUCLIDEAN2
    x, y = M.point(E, 0, 0), M.point(E, 1, 0)
    P = cone_boundary(x, y, 0.2)
    # every traced point sits on the boundary of the cone
    n = len(P)
    margin = cone_margin_array(E, np.repeat(x.array[None], n, 0), np.repeat(y.array[None], n, 0), P, 0.2)
    assert np.max(np.abs(margin)) < 1e-9
    # the outline contains both ends of the segment and is symmetric about it
    assert P[:, 0].min() <= 1e-9 and P[:, 0].max() >= 1 - 1e-9
    assert P[:, 1].max() == pytest.approx(-P[:, 1].min(), abs=1e-9)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_plot(P, "xy", str(a), closed=True, model=E)
    emit_plot(P, "xy", str(b), closed=True, model=E)
    assert _read(a) == _read(b)
    assert "<polygon" in a.read_text()
