from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
import warnings

import pytest

from jointfe.cli import main
from jointfe.synthetic import write_cyclic_project


def run_cli(capsys, *argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_schedule_sim_published_settings_row(capsys):
    code, out, _ = run_cli(capsys, "schedule-sim", "--M", "200", "--p1", "0.9")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1
    r = rows[0]
    assert (r["M"], r["p1"], r["N_FE"], r["N_HPO"]) == ("200", "0.9", "100", "100")
    assert float(r["max_abs_Q"]) < 1


def test_schedule_sim_sweep_to_file(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run_cli(capsys, "schedule-sim", "--M", "2-20", "--sweep", "5", "--out", str(out))
    rows = list(csv.DictReader(out.open()))
    assert code == 0 and len(rows) >= 19 * 4
    for r in rows:
        assert abs(int(r["N_FE"]) - int(r["N_HPO"])) <= 1 and float(r["max_abs_Q"]) < 1


def test_schedule_sim_rejects_bad_p1(capsys):
    code, _, err = run_cli(capsys, "schedule-sim", "--M", "4", "--p1", "0.95")
    assert code == 1 and "upper bound" in err


def test_usage_errors(capsys):
    assert run_cli(capsys, "frobnicate")[0] == 1
    assert run_cli(capsys)[0] == 1
    assert run_cli(capsys, "schedule-sim", "--p1", "0.9", "--sweep", "3")[0] == 1


def test_validate(capsys, tmp_path):
    write_cyclic_project(tmp_path, n=50)
    code, out, _ = run_cli(capsys, "validate", str(tmp_path / "data.csv"), str(tmp_path / "schema.json"))
    assert code == 0 and "50 rows" in out
    schema = json.loads((tmp_path / "schema.json").read_text())
    schema["columns"]["extra"] = "numeric"
    (tmp_path / "bad.json").write_text(json.dumps(schema))
    code, _, err = run_cli(capsys, "validate", str(tmp_path / "data.csv"), str(tmp_path / "bad.json"))
    assert code == 1 and "extra" in err
    assert run_cli(capsys, "validate", str(tmp_path / "nope.csv"), str(tmp_path / "schema.json"))[0] == 1


def test_run_then_inspect(capsys, tmp_path):
    cfg = write_cyclic_project(tmp_path, n=120, budget=8)
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "run", str(cfg), "--budget", "6", "--output-dir", str(out_dir))
    assert code == 0 and "best validation score" in out
    report = json.loads((out_dir / "report.json").read_text())
    assert len(report["history"]) == 6 and report["config"]["budget"] == 6
    assert (out_dir / "curve.csv").exists() and (out_dir / "events.jsonl").exists()
    code, out, _ = run_cli(capsys, "inspect", str(out_dir / "report.json"))
    assert code == 0
    assert f"best validation score: {report['best_val_score']!r}" in out
    assert f"FE={report['scheduler_counts']['FE']}" in out
    assert run_cli(capsys, "inspect", str(tmp_path / "missing.json"))[0] == 1


def test_run_bad_config(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"budget": 1}))
    assert run_cli(capsys, "run", str(tmp_path / "c.json"))[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "jointfe", "schedule-sim", "--M", "11", "--p1", "0.6"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    row = proc.stdout.strip().splitlines()[1].split(",")
    assert sorted(row[2:4]) == ["5", "6"]
