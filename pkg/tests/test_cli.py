import json
import subprocess
import sys

import yaml

from d3gd import cli


def write(tmp_path, raw, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


BASE = {"scenario": "custom", "T": 15, "graph": {"n": 4, "p": 0.7}, "data": {"K": 3, "d": 2, "M": 8}}


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, BASE)]) == 0
    assert json.loads(capsys.readouterr().out)["T"] == 15


def test_validate_invalid(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, {**BASE, "seeds": []})]) == 1
    assert "seeds" in capsys.readouterr().err


def test_validate_missing_file(tmp_path):
    assert cli.main(["validate", str(tmp_path / "nope.yaml")]) == 1


def test_run_and_summarize(tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["run", write(tmp_path, BASE), "--seeds", "0-1", "--output", str(out), "--override", "T=10"])
    assert rc == 0
    assert len(list(out.rglob("summary.json"))) == 6
    assert "median speedup" in capsys.readouterr().out
    assert cli.main(["summarize", str(out), "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["seed"] for r in rows} == {0, 1}


def test_runtime_failure_exit_code(tmp_path):
    raw = {**BASE, "T": 200, "output": str(tmp_path / "o"), "algorithms": [{"name": "didgd", "mode": "didgd"}, {"name": "boom", "mode": "didgd", "gamma": 1e6}]}
    assert cli.main(["run", write(tmp_path, raw)]) == 2
    assert cli.main(["summarize", str(tmp_path / "o")]) == 2


def test_summarize_empty(tmp_path):
    assert cli.main(["summarize", str(tmp_path)]) == 1


def test_seed_parser():
    assert cli._parse_seeds("0,2-4, 9") == [0, 2, 3, 4, 9]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "d3gd.cli", "validate", write(tmp_path, BASE)], capture_output=True, text=True)
    assert r.returncode == 0
