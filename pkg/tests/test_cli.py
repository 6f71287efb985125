import csv
import json
import os
import subprocess
import sys

import pytest

from storagenet import __version__
from storagenet import cli
from storagenet.cli import main
from storagenet.scenario import bundled, load_scenario, scenario_hash


def shortened(tmp_path, name, horizon, **extra):
    with open(bundled(name), encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["horizon"] = horizon
    doc.update(extra)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name", ["unit_storage", "star_homogeneous", "markov_two_state"])
def test_validate_ok(capsys, name):
    code, out, _ = run_cli(capsys, "validate", bundled(name))
    assert code == 0
    assert out.startswith("ok:")
    assert scenario_hash(load_scenario(bundled(name))) in out


def test_validate_reports_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run_cli(capsys, "validate", str(bad))
    assert code != 0 and "ScenarioParseError" in err
    code, _, err = run_cli(capsys, "validate", str(tmp_path / "missing.json"))
    assert code != 0 and "error" in err


def test_unknown_subcommand_and_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", bundled("unit_storage")])
    assert info.value.code != 0
    with pytest.raises(SystemExit) as info:
        main(["plan", bundled("unit_storage"), "--fast"])
    assert info.value.code != 0
    with pytest.raises(SystemExit) as info:
        main(["simulate", bundled("unit_storage"), "--policy", "oracle"])
    assert info.value.code != 0
    with pytest.raises(SystemExit) as info:
        main(["simulate", bundled("unit_storage"), "--policy", "greedy", "--seeds", "0"])
    assert info.value.code != 0


def test_plan_unit_storage(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "plan", bundled("unit_storage"), "--out", str(tmp_path))
    assert code == 0
    report = json.loads(out)
    bus = report["plan"]["buses"][0]
    assert bus["gamma"] == pytest.approx(-0.5, abs=1e-15)
    assert bus["w"] == pytest.approx(0.4, abs=1e-15)
    assert report["plan"]["certified_bound"] == pytest.approx(0.0125, abs=1e-15)
    assert report["version"] == __version__
    assert report["scenario_hash"] == scenario_hash(load_scenario(bundled("unit_storage")))
    assert (tmp_path / "plan.json").read_text() == out


def test_bound_iid(capsys):
    code, out, _ = run_cli(capsys, "bound", bundled("unit_storage"))
    assert code == 0
    assert json.loads(out)["iid_bound"] == pytest.approx(0.0125)


def test_bound_markov(capsys):
    code, out, _ = run_cli(capsys, "bound", bundled("markov_two_state"), "--markov")
    assert code == 0
    report = json.loads(out)
    assert report["return_time_mean"] == pytest.approx(2.0, abs=1e-10)
    assert report["return_time_second_moment"] == pytest.approx(6.0, abs=1e-10)
    assert report["markov_bound"] >= report["iid_bound"]


def test_bound_markov_needs_a_chain(capsys):
    code, _, err = run_cli(capsys, "bound", bundled("unit_storage"), "--markov")
    assert code != 0 and "markov" in err


def test_simulate_writes_traces(capsys, tmp_path):
    sc = shortened(tmp_path, "star_homogeneous", 25)
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "simulate", sc, "--policy", "lyapunov", "--seeds", "2",
                           "--workers", "1", "--out", str(out_dir))
    assert code == 0
    report = json.loads(out)
    assert report["seeds"] == [0, 1]
    assert report["bound_violations"] == 0 and report["threshold_violations"] == 0
    assert report["lower_bound"] == pytest.approx(
        report["average_cost"] - report["plan"]["certified_bound"])
    assert sorted(os.listdir(out_dir)) == ["report.json", "trace-seed0.csv", "trace-seed1.csv"]
    with open(out_dir / "trace-seed1.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "bus", "s", "u", "cost", "flow:hub-1", "flow:hub-2", "flow:hub-3",
                       "flow:hub-4"]
    assert len(rows) == 1 + 25 * 5
    assert rows[1][:2] == ["1", "0"] and rows[-1][:2] == ["25", "4"]
    assert float(rows[1][2]) == 0.0


@pytest.mark.parametrize("policy", ["greedy", "no-storage"])
def test_simulate_other_policies(capsys, tmp_path, policy):
    sc = shortened(tmp_path, "unit_storage", 50)
    code, out, _ = run_cli(capsys, "simulate", sc, "--policy", policy)
    assert code == 0
    report = json.loads(out)
    assert report["policy"] == policy
    assert "plan" not in report


def test_compare_writes_sweep(capsys, tmp_path):
    sc = shortened(tmp_path, "single_bus_day_night", 60)
    out_dir = tmp_path / "cmp"
    code, out, _ = run_cli(capsys, "compare", sc, "--out", str(out_dir))
    assert code == 0
    with open(out_dir / "sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s_max", "j_no_storage", "j_greedy", "j_lyapunov", "lower_bound",
                       "upper_pct_savings"]
    assert len(rows) > 2
    assert out == (out_dir / "sweep.csv").read_text()
    report = json.loads((out_dir / "report.json").read_text())
    assert report["version"] == __version__
    assert len(report["points"]) == len(rows) - 1


def test_compare_requires_out(capsys):
    with pytest.raises(SystemExit):
        main(["compare", bundled("unit_storage")])


def test_outputs_are_byte_identical(capsys, tmp_path):
    sc = shortened(tmp_path, "star_homogeneous", 30)
    blobs = []
    for k in range(2):
        out_dir = tmp_path / f"run{k}"
        assert run_cli(capsys, "simulate", sc, "--policy", "lyapunov", "--out",
                       str(out_dir))[0] == 0
        blobs.append({p: (out_dir / p).read_bytes() for p in os.listdir(out_dir)})
    assert blobs[0] == blobs[1]


def test_kmatrix(capsys):
    code, out, _ = run_cli(capsys, "kmatrix", bundled("star_homogeneous"))
    assert code == 0
    report = json.loads(out)
    assert report["tree"] and report["rows"] == 0 and report["expected_rows"] == 0
    assert report["k_matrix"] == []


def test_kmatrix_on_a_loop(capsys, tmp_path):
    with open(bundled("star_homogeneous"), encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["network"]["edges"].append({"id": "ring", "from": 1, "to": 2, "beta": 2.0,
                                    "f_max": 0.1})
    path = tmp_path / "loop.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "kmatrix", str(path))
    assert code == 0
    report = json.loads(out)
    assert report["rows"] == report["expected_rows"] == report["rank"] == 1
    assert report["kvl_residual"] <= 1e-10


def test_failed_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "report.json"
    target.write_text("old")

    def broken_replace(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", broken_replace)
    with pytest.raises(OSError):
        cli.atomic_write(str(target), "new content")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["report.json"]


def test_atomic_write_creates_directories(tmp_path):
    target = tmp_path / "a" / "b" / "x.txt"
    cli.atomic_write(str(target), "hello\n")
    assert target.read_text() == "hello\n"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "storagenet", "plan", bundled("unit_storage")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["plan"]["certified_bound"] == pytest.approx(0.0125)
    proc = subprocess.run([sys.executable, "-m", "storagenet", "validate",
                           str(tmp_path / "nope.json")], capture_output=True, text=True,
                          check=False)
    assert proc.returncode != 0
