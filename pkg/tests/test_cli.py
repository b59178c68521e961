import json
import subprocess
import sys

import pytest

from kdstrap.cli import main
from kdstrap.textio import parse_kv, read_trajectory_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_subextremal(capsys):
    code, out, _ = run(capsys, "validate", "--lambda", "0.06", "--mass", "1", "--spin", "0")
    assert code == 0
    rep = parse_kv(out)
    assert rep["subextremal"] is True
    assert rep["horizons.r_e"] == pytest.approx(2.2183264606983406)
    assert rep["h_negative.passed"] is True


def test_validate_reports_failure(capsys):
    code, out, err = run(capsys, "validate", "--lambda", "0.5", "--mass", "1", "--spin", "0", "--format", "json")
    assert code == 1
    assert json.loads(out)["subextremal"] is False
    assert "not subextremal" in err


def test_validate_hint_prints_interval(capsys):
    from kdstrap.radial import lambda_interval

    lam = lambda_interval(1.05, 1.0).lambda0 / 2
    code, out, err = run(capsys, "validate", "--spin", "1.05", "--mass", "1", "--lambda", repr(lam))
    assert code == 1
    assert "subextremal iff Lambda in" in err
    assert parse_kv(out)["lambda_interval.lambda0"] == pytest.approx(2 * lam)


def test_validate_nonpositive_lambda_is_domain_error(capsys):
    code, _, err = run(capsys, "validate", "--lambda", "-1", "--mass", "1", "--spin", "0")
    assert code == 1
    assert "DomainError" in err


@pytest.mark.parametrize("argv", [
    ["validate", "--lambda", "abc", "--mass", "1", "--spin", "0"],
    ["validate", "--mass", "1", "--spin", "0"],
    ["nonsense"],
    [],
    ["flow", "--lambda", "0.02", "--mass", "1", "--spin", "0.9", "--r", "3", "--xi", "1", "2",
     "--kind", "mode-rot"],
])
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_params_file_with_override(tmp_path, capsys):
    f = tmp_path / "p.txt"
    f.write_text("# headline\nlambda = 0.02\nmass = 1\nspin = 0.9\n")
    code, out, _ = run(capsys, "validate", "--params", str(f), "--spin", "0", "--format", "json")
    assert code == 0
    assert json.loads(out)["params"] == {"lambda": 0.02, "mass": 1.0, "spin": 0.0}
    f.write_text("lambda = 0.02\ncolour = red\n")
    assert run(capsys, "validate", "--params", str(f))[0] == 2
    assert run(capsys, "validate", "--params", str(tmp_path / "missing.txt"))[0] == 2


def test_trapping_scan(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    code, _, _ = run(capsys, "trapping-scan", "--lambda", "0.06", "--mass", "1", "--spin", "0",
                     "--grid", "8", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "xi_t,xi_phi,case,r_trap,F_pp,rate_equator"
    assert len(lines) == 9
    rows = [ln.split(",") for ln in lines[1:]]
    for r in rows:
        if r[2] == "Interior":
            assert float(r[3]) == pytest.approx(3.0)
    assert sum(r[2] == "ZeroXiT" for r in rows) == 2


def test_trapping_scan_rejects_superextremal(capsys):
    code, _, err = run(capsys, "trapping-scan", "--lambda", "0.02", "--mass", "1", "--spin", "5")
    assert code == 1
    assert "NotSubextremal" in err


def test_flow_csv(capsys):
    code, out, err = run(capsys, "flow", "--lambda", "0.02", "--mass", "1", "--spin", "0.9",
                         "--kind", "mode-rot", "--r", "3", "--theta", "1.2", "--xi", "0.3", "1", "0.5",
                         "--span", "20")
    assert code == 0
    header, data, comments = read_trajectory_csv(out)
    assert header[0] == "s" and len(data) > 2
    q = data[:, header.index("q")]
    assert abs(q - q[0]).max() < 1e-8 * abs(q[0])
    summary = parse_kv(err)
    assert summary["kind"] == "mode-rot"
    assert summary["termination"] in ("span", "event")


def test_flow_wave_json(tmp_path, capsys):
    out = tmp_path / "w.json"
    code, stdout, _ = run(capsys, "flow", "--lambda", "0.02", "--mass", "1", "--spin", "0.9",
                          "--r", "2.5", "--xi", "-1", "0", "2", "0", "--close", "--format", "json",
                          "--out", str(out))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["summary"]["q_drift"] < 1e-8
    assert len(rep["states"][0]) == 8
    assert "termination" in stdout


def test_flow_rejects_radius_outside_region(capsys):
    code, _, _ = run(capsys, "flow", "--lambda", "0.02", "--mass", "1", "--spin", "0.9",
                     "--kind", "mode-rot", "--r", "50", "--xi", "1", "0", "0")
    assert code == 1


def test_verify_defaults_to_headline(capsys):
    code, out, err = run(capsys, "verify", "--suite", "radial-points")
    rep = json.loads(out)
    assert rep["params"] == {"lambda": 0.02, "mass": 1.0, "spin": 0.9}
    assert code == (0 if rep["passed"] else 1)
    assert rep["passed"]
    assert "PASS" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kdstrap", "validate", "--lambda", "0.02", "--mass", "1",
                           "--spin", "0.9", "--format", "json"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["subextremal"] is True
