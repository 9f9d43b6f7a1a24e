import json
import subprocess
import sys

import numpy as np
import pytest

from isorealize.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_exit_codes(capsys):
    assert run(capsys, "check", "--example", "sinh")[0] == 0
    code, out, _ = run(capsys, "check", "--example", "frobenius-cex")
    assert code == 3
    rep = json.loads(out)["report"]
    assert rep["frobenius_ok"] and not rep["basis_ok"]
    assert run(capsys, "check", "--field", "(-y, x, 1)")[0] == 2


@pytest.mark.parametrize("argv", [
    ["check", "--field", "(1, sinh(x), "],
    ["check", "--field", "(1, 2*(, 0)"],
    ["check", "--example", "nope"],
    ["check", "--box", "1,0,0,1,0,1"],
    ["check", "--example", "sinh", "--field", "(1, 0, 0)"],
    ["trace", "--dir", "D7"],
])
def test_config_errors_exit_64(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 64
    assert "error" in err


def test_unknown_option_exits_64(capsys):
    with pytest.raises(SystemExit) as info:
        main(["check", "--bogus"])
    assert info.value.code == 64


def test_field_file(tmp_path, capsys):
    path = tmp_path / "field.json"
    path.write_text('{"jx": "1", "jy": "sinh(x)", "jz": "0", "curl": ["0", "0", "cosh(x)"]}')
    assert run(capsys, "check", "--field", str(path), "--box", "0.2,2,-1,1,-1,1")[0] == 0


def test_realize_refuses_without_force(capsys):
    code, _, err = run(capsys, "realize", "--example", "frobenius-cex")
    assert code == 3
    assert "--force" in err


def test_realize_small_grid(tmp_path, capsys):
    csv = tmp_path / "sigma.csv"
    code, out, _ = run(capsys, "realize", "--example", "sinh", "--box", "0.2,2,-1,1,-1,1",
                       "--grid", "3", "--out", str(csv), "--threads", "1")
    assert code == 0
    body = json.loads(out)
    assert body["schema"] == "1"
    assert body["residual"]["max_curl_residual"] < 5e-6
    rows = csv.read_text().splitlines()
    assert rows[0] == "x,y,z,w,sigma" and len(rows) == 28


def test_realize_tilde(capsys):
    code, out, _ = run(capsys, "realize", "--example", "sinh", "--box", "0.2,2,-1,1,-1,1",
                       "--grid", "3", "--normalization", "tilde")
    assert code == 0
    assert json.loads(out)["residual"]["max_curl_residual"] < 5e-6


def test_threads_do_not_change_output(capsys, monkeypatch):
    argv = ["realize", "--example", "sinh", "--box", "0.2,2,-1,1,-1,1", "--grid", "3"]
    monkeypatch.setenv("REALIZER_THREADS", "1")
    a = run(capsys, *argv)[1]
    monkeypatch.setenv("REALIZER_THREADS", "3")
    b = run(capsys, *argv)[1]
    assert a == b


def test_bad_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("REALIZER_THREADS", "many")
    assert run(capsys, "verify", "--example", "sinh", "--grid", "3")[0] == 64


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--example", "sinh")
    assert code == 0
    assert json.loads(out)["residual"]["max_curl_residual"] < 5e-6
    code, _, _ = run(capsys, "verify", "--example", "sinh", "--sigma", "1", "--grid", "3")
    assert code == 1


def test_periodic_needs_periodic_field(capsys):
    code, _, err = run(capsys, "periodic", "--example", "sinh")
    assert code == 64
    assert "not periodic" in err


def test_periodic_verdicts(capsys, tmp_path):
    code, out, _ = run(capsys, "periodic", "--example", "fgh", "--f", "sin(2*pi*x)+2")
    assert code == 0
    assert json.loads(out)["torus"]["verdict"] == "RealizableInTorus"
    csv = tmp_path / "scan.csv"
    code, out, _ = run(capsys, "periodic", "--example", "fgh", "--f", "sin(2*pi*x)",
                       "--csv", str(csv))
    body = json.loads(out)
    assert body["torus"]["verdict"] == "NotRealizable"
    assert body["torus"]["witnesses"]
    assert csv.read_text().startswith("start_index,x,y,z,T,I")


def _trace(capsys, *argv):
    code, out, _ = run(capsys, "trace", *argv)
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "t,x,y,z,q"
    return np.array([[float(v) for v in r.split(",")] for r in rows[1:]])


def test_trace_x2_is_straight(capsys):
    a = _trace(capsys, "--example", "sinh", "--dir", "D2", "--start", "0,1,0", "--t", "1")
    assert np.allclose(a[:, 1:3], [0.0, 1.0])
    assert np.allclose(a[:, 3], a[:, 0])
    assert a[-1, 0] == 1.0


def test_trace_zero_time_single_row(capsys):
    assert len(_trace(capsys, "--dir", "D1", "--t", "0")) == 1


def test_trace_x3_approaches_zero_of_f(capsys):
    a = _trace(capsys, "--example", "fgh", "--f", "sin(2*pi*x)", "--dir", "D3",
               "--start", "0.2,0,0", "--t", "-10")
    assert abs(a[-1, 1]) < 1e-6
    assert np.all(np.diff(np.abs(a[:, 4])) >= 0)
    assert abs(a[-1, 4]) > 100


def test_trace_reports_singular_stop(capsys):
    code, _, err = run(capsys, "trace", "--field", "(1, 0, 0)", "--dir", "D2")
    assert code == 1
    assert "curl j" in err


def test_planar(capsys):
    code, out, _ = run(capsys, "planar", "--start", "0.3,0.4", "--grid", "5")
    assert code == 0
    body = json.loads(out)
    assert abs(body["hitting"]["endpoint"][0] + 0.05 * np.sin(
        2 * np.pi * sum(body["hitting"]["endpoint"]))) < 1e-10
    assert body["residual"]["max_div_residual"] < 5e-6


def test_examples(capsys):
    code, out, _ = run(capsys, "examples", "list")
    names = [e["name"] for e in json.loads(out)["examples"]]
    assert "sinh" in names and "frobenius-cex" in names
    code, out, _ = run(capsys, "examples", "show", "sinh")
    body = json.loads(out)
    assert body["anchor"] == [0, 1, 0] and body["sigma_at_anchor"] == 1


def test_module_entry_point_is_byte_identical():
    argv = [sys.executable, "-m", "isorealize", "check", "--example", "frobenius-cex"]
    a = subprocess.run(argv, capture_output=True)
    b = subprocess.run(argv, capture_output=True)
    assert a.returncode == 3
    assert a.stdout == b.stdout and a.stdout
