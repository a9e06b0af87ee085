import csv
import json
import os
import subprocess
import sys

import pytest

from mpsim import presets
from mpsim.cli import main, parse_grid, parse_seeds, UsageError

SCENARIO = """\
name: tiny
duration: 3s
warmup: 1s
links:
  p1: {bandwidth: 5Mbps, delay: 10ms}
  p2: {bandwidth: 5Mbps, delay: 20ms}
flows:
  - name: m
    type: mptcp
    paths: [p1, p2]
"""


@pytest.fixture
def scn(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(SCENARIO)
    return str(p)


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            path = os.path.join(dirpath, f)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_run_writes_outputs(scn, tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", scn, "--seed", "4", "--out", str(out)]) == 0
    summary = json.loads((out / "tiny-seed4" / "summary.json").read_text())
    assert summary["seed"] == 4 and summary["scenario"] == "tiny"
    assert "goodput" in capsys.readouterr().out


def test_run_is_deterministic(scn, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", scn, "--seed", "2", "--out", str(a)]) == 0
    assert main(["run", scn, "--seed", "2", "--out", str(b)]) == 0
    ta, tb = _tree(a), _tree(b)
    assert ta.keys() == tb.keys() and len(ta) > 5
    assert ta == tb


def test_override_changes_summary(scn, tmp_path, capsys):
    assert main(["run", scn, "--set", "links.p2.loss=1%", "--json", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["links"]["p2"]["random_drops"] > 0
    assert summary["links"]["p1"]["random_drops"] == 0


def test_invalid_value_exits_2(scn, tmp_path, capsys):
    assert main(["run", scn, "--set", "links.p1.loss=1.5", "--out", str(tmp_path)]) == 2
    assert "links.p1.loss" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def _tiny_preset(name, passed, monkeypatch):
    def build(seed):
        return [("only", {"name": "x", "seed": seed, "duration": "2s", "warmup": "0s",
                          "links": {"p": {"bandwidth": "2Mbps", "delay": "5ms"}},
                          "flows": [{"name": "f", "path": "p"}]})]

    def evaluate(runs):
        g = runs["only"]["flows"]["f"]["goodput_mbps"]
        return [presets.Check("goodput reported", passed, f"{g:.2f} Mbps")], [{"goodput": g}]

    monkeypatch.setitem(presets.PRESETS, name, presets.Preset(name, "test", build, evaluate))


def test_preset_exit_codes(monkeypatch, tmp_path, capsys):
    _tiny_preset("unit-pass", True, monkeypatch)
    _tiny_preset("unit-fail", False, monkeypatch)
    assert main(["preset", "unit-pass", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "unit-pass-seed1" / "checks.txt").read_text().count("PASS") == 1
    assert (tmp_path / "unit-pass-seed1" / "only" / "summary.json").exists()
    assert main(["preset", "unit-fail", "--no-output"]) == 1
    assert "FAIL  goodput reported" in capsys.readouterr().out


def test_unknown_preset_exits_2(capsys):
    assert main(["preset", "no-such-preset"]) == 2
    err = capsys.readouterr().err
    assert "no-such-preset" in err and "ofo-asymmetry" in err


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in ("fairness-symmetric", "loss-sweep", "ofo-asymmetry", "dynamic-breakdown"):
        assert name in out


def test_sweep_rows(scn, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", scn, "--grid", "links.p1.loss=0,0.1%,1%", "--seeds", "1-3",
                 "--output", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 9
    assert {r["links.p1.loss"] for r in rows} == {"0", "0.1%", "1%"}
    assert all(r["error"] == "" for r in rows)
    assert "9 runs (0 failed)" in capsys.readouterr().out


def test_sweep_records_bad_points(scn, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", scn, "--grid", "links.p1.loss=0,2", "--output", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["error"] == "" and "links.p1.loss" in rows[1]["error"]


def test_empty_grid_exits_2(scn, capsys):
    assert main(["sweep", scn, "--grid", ";"]) == 2
    assert "empty grid" in capsys.readouterr().err


def test_grid_and_seed_parsing():
    assert parse_grid(["a=1,2;b=x", "c=3"]) == [("a", ["1", "2"]), ("b", ["x"]), ("c", ["3"])]
    assert parse_seeds("1, 3-5,9") == [1, 3, 4, 5, 9]
    for bad in (["a"], ["=1"], ["a="]):
        with pytest.raises(UsageError):
            parse_grid(bad)
    with pytest.raises(UsageError):
        parse_seeds("x")


def test_module_entry_point(scn, tmp_path):
    r = subprocess.run([sys.executable, "-m", "mpsim", "run", scn, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "mpsim", "sweep", scn, "--grid", ""],
                       capture_output=True, text=True)
    assert r.returncode == 2
