import json
import subprocess
import sys

import numpy as np
import pytest

from nullflow.cli import EXIT_ABORT, EXIT_FAIL, EXIT_INPUT, EXIT_OK, main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_synth_writes_curve(tmp_path):
    assert run(tmp_path, "synth", "--scenario", "pn_exp_circle") == EXIT_OK
    data = np.loadtxt(tmp_path / "curve.csv", delimiter=",", skiprows=1)
    s = data[:, 0]
    assert np.abs(data[:, 1] - np.exp(s)).max() < 1e-10
    assert np.abs(data[:, 2] - np.cos(s)).max() < 1e-10


def test_verify_zero_flow(tmp_path, capsys):
    assert run(tmp_path, "verify", "--scenario", "zero_flow_psn") == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] is True
    assert all(r["status"] != "fail" for r in report["reports"] if r["selected"])
    assert "zero_flow_psn: PASS" in capsys.readouterr().out
    assert (tmp_path / "report.txt").read_text().startswith("identity")


def test_verify_forced_stated_variant_fails(tmp_path, capsys):
    assert run(tmp_path, "verify", "--scenario", "pn_forced_stated") == EXIT_FAIL
    report = json.loads((tmp_path / "report.json").read_text())
    failed = {r["name"] for r in report["reports"] if r["selected"] and r["status"] == "fail"}
    assert {"pn.frame.B2_t", "pn.k2_t"} <= failed


def test_simulate_inextensible(tmp_path):
    assert run(tmp_path, "simulate", "--scenario", "pn_inextensible") == EXIT_OK
    drift = np.loadtxt(tmp_path / "drift.csv", delimiter=",", skiprows=1)
    assert len(drift) >= 101
    assert np.abs(drift[:, 2]).max() <= 1e-6
    assert (tmp_path / "grid.bin").stat().st_size > 64


def test_audit(tmp_path):
    assert run(tmp_path, "audit", "--scenario", "pn_audit") == EXIT_OK
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["grid_runs"] == 9
    assert all(e["winner"] for e in audit["identities"])


def test_input_errors(tmp_path, capsys):
    assert run(tmp_path, "synth", "--scenario", str(tmp_path / "missing.ini")) == EXIT_INPUT
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nkind = pn\n[curve]\nk1 = 1\nk3 = 1\n")
    assert run(tmp_path, "synth", "--scenario", str(bad)) == EXIT_INPUT
    assert "k3" in capsys.readouterr().err
    assert run(tmp_path, "verify", "--scenario", "zero_flow_pn", "--refinements", "2") == EXIT_INPUT
    with pytest.raises(SystemExit):
        main(["explode", "--scenario", "zero_flow_pn"])


def test_numerical_abort(tmp_path, capsys):
    sc = tmp_path / "unstable.ini"
    sc.write_text(
        "[scenario]\nname = unstable\nkind = pn\nmode = position\n"
        "[curve]\nk1 = 1\nk2 = 0.5\n"
        "[flow]\nc2 = 1\n"
        "[grid]\ndu = 0.001\ndt = 0.0002\nduration = 0.04\n"
    )
    assert run(tmp_path, "simulate", "--scenario", str(sc)) == EXIT_ABORT
    assert "unstable" in capsys.readouterr().err


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--scenario", "psn_parabola", "--out", str(out)]) == EXIT_OK
    for name in ("grid.csv", "grid.bin", "drift.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nullflow.cli", "synth", "--scenario",
                           "zero_flow_pn", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "curve.csv").exists()
