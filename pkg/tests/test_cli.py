import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from univbound.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_simulate_scalar(tmp_path, capsys):
    out = tmp_path / "sim"
    code = main(["simulate", "--config", str(CONFIGS / "scalar.conf"), "--set", "alpha=1",
                 "--set", "beta=3", "--set", "t_end=10", "--out", str(out)])
    assert code == 0
    assert (out / "trajectory.csv").exists() and (out / "manifest.json").exists()
    captured = capsys.readouterr()
    assert captured.out == ""  # data go to files, diagnostics to stderr
    assert "wrote" in captured.err


def test_missing_config(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "nope.conf")])
    assert code == 1
    assert "nope.conf" in capsys.readouterr().err


def test_bad_override_names_key(capsys):
    code = main(["simulate", "--config", str(CONFIGS / "scalar.conf"), "--set", "beta=-1"])
    assert code == 1
    assert "beta" in capsys.readouterr().err


def test_sweep_expected_fail(tmp_path):
    out = tmp_path / "alpha_ge_beta"
    code = main(["sweep", "--config", str(CONFIGS / "alpha_ge_beta.conf"), "--set",
                 "amplitudes=1,1e2,1e4,1e6", "--jobs", "1", "--out", str(out)])
    assert code == 0
    verdicts = json.loads((out / "manifest.json").read_text())["verdicts"]
    assert verdicts["universal_bound"] == "fail" and verdicts["expected_universal"] is False


def test_violation_exit_code(tmp_path):
    out = tmp_path / "v"
    args = ["sweep", "--config", str(CONFIGS / "alpha_ge_beta.conf"), "--set",
            "amplitudes=1,1e3,1e6", "--set", "expect_universal=true", "--out", str(out)]
    assert main(args) == 2
    assert main(args + ["--set", "fail_on_violation=false"]) == 0


def test_verify_assumptions(tmp_path):
    out = tmp_path / "va"
    code = main(["verify-assumptions", "--config", str(CONFIGS / "kirchhoff_neumann.conf"),
                 "--set", "sample_count=100", "--out", str(out)])
    assert code == 0
    text = (out / "assumptions.csv").read_text()
    assert text.splitlines()[1].startswith("F2,False")


def test_kirchhoff_neumann_sweep_refused(tmp_path, capsys):
    code = main(["sweep", "--config", str(CONFIGS / "kirchhoff_neumann.conf"),
                 "--out", str(tmp_path / "k")])
    assert code == 1
    assert "constant functions" in capsys.readouterr().err


def test_fit_decay_synthetic(tmp_path, capsys):
    t = np.geomspace(1, 1000, 50)
    csv = tmp_path / "decay.csv"
    np.savetxt(csv, np.column_stack([t, 3 * t ** -2.0]), delimiter=",", header="t,E0",
               comments="")
    assert main(["fit-decay", str(csv), "--window", "1", "1000"]) == 0
    fit = json.loads((tmp_path / "fit_decay.json").read_text())
    assert fit["slope"] == pytest.approx(-2.0, abs=1e-10)
    assert "slope -2" in capsys.readouterr().err


def test_fit_decay_missing_file(tmp_path):
    assert main(["fit-decay", str(tmp_path / "none.csv")]) == 1


def test_report(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(CONFIGS / "scalar.conf"), "--set", "t_end=10",
                 "--out", str(out)]) == 0
    assert main(["report", str(out)]) == 0
    text = (out / "report.txt").read_text()
    assert "differential_inequality: pass" in text
    assert (out / "report_trajectory.svg").read_text().lstrip().startswith("<?xml")


def test_report_missing_directory(tmp_path):
    assert main(["report", str(tmp_path / "absent")]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "univbound.cli", "report",
                           str(tmp_path / "absent")], capture_output=True, text=True)
    assert proc.returncode == 1 and "not found" in proc.stderr and proc.stdout == ""
