import csv
import json
import subprocess
import sys

import pytest

from maskft.cli import main

from conftest import ONE_ROUND_IMPL, ONE_ROUND_NOMINAL

NOM, FAULTY, LIMITED = "memcell_nominal", "memcell_faulty", "memcell_faulty_limited"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_exit_codes(capsys):
    assert run(capsys, "check", NOM, LIMITED)[0] == 0
    code, out, _ = run(capsys, "check", NOM, FAULTY)
    assert code == 1 and "not-masking" in out and "fault" in out


def test_check_json(capsys):
    code, out, _ = run(capsys, "check", NOM, FAULTY, "--json")
    rep = json.loads(out)
    assert code == 1 and rep["verdict"] == "not-masking"
    assert rep["graph"]["refuter"] == 48 and rep["trace"][-1]["level"] == 0
    assert "wall_time_s" not in rep
    _, out, _ = run(capsys, "check", NOM, FAULTY, "--json", "--timing")
    assert "wall_time_s" in json.loads(out)


def test_output_is_deterministic(capsys):
    for argv in (["check", NOM, FAULTY, "--json"], ["value", NOM, FAULTY, "--milestone", "fault=1"],
                 ["graph", NOM, LIMITED, "--format", "dot"]):
        a = run(capsys, *argv)[1]
        assert a == run(capsys, *argv)[1]


def test_failing(capsys):
    assert run(capsys, "failing", NOM, FAULTY)[0] == 0
    code, out, _ = run(capsys, "failing", NOM, LIMITED, "--oracle", "--json")
    rep = json.loads(out)
    assert code == 1 and rep["failing"] is False and rep["oracle_failing"] is False


def test_value(capsys):
    code, out, _ = run(capsys, "value", NOM, FAULTY, "--milestone", "fault=1", "--json", "--oracle")
    rep = json.loads(out)
    assert code == 0 and rep["converged"] and abs(rep["value"] - 4) < 1e-8
    assert rep["oracle_value"] == "4" and rep["bound_source"] == "attractor"
    assert rep["snippet_bound_log10"] > 500


def test_value_without_milestones_is_zero(capsys):
    code, out, _ = run(capsys, "value", NOM, FAULTY, "--json")
    assert code == 0 and json.loads(out)["value"] == 0


def test_value_refuses_when_not_failing(capsys):
    code, _, err = run(capsys, "value", NOM, LIMITED, "--milestone", "fault=1")
    assert code == 3 and "refusing" in err
    code, out, _ = run(capsys, "value", NOM, LIMITED, "--json")
    assert code == 3 and json.loads(out)["refused"]


def test_value_non_convergence(capsys):
    code, out, _ = run(capsys, "value", NOM, FAULTY, "--milestone", "fault=1", "--max-iters", "3")
    assert code == 1 and "NOT converged" in out


def test_value_bound_override(capsys):
    code, out, _ = run(capsys, "value", NOM, FAULTY, "--milestone", "fault=1", "--bound", "50", "--json")
    rep = json.loads(out)
    assert code == 0 and rep["bound"] == 50 and rep["bound_source"] == "user"


@pytest.mark.parametrize("argv", [
    ["value", NOM, FAULTY, "--milestone", "nope=1"],
    ["value", NOM, FAULTY, "--milestone", "fault"],
    ["value", NOM, FAULTY, "--epsilon", "0"],
    ["value", NOM, FAULTY, "--max-iters", "0"],
    ["value", NOM, FAULTY, "--bound", "abc"],
    ["check", NOM, "no_such_model"],
    ["frobnicate"],
    [],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_malformed_model(capsys, tmp_path):
    bad = tmp_path / "bad.pm"
    bad.write_text("var x : [0..1] init 0;\n[a] true -> (x'=1;\n")
    code, _, err = run(capsys, "check", NOM, str(bad))
    assert code == 2 and "bad.pm" in err and "2:18" in err


def test_model_files(capsys, tmp_path):
    (tmp_path / "n.pm").write_text(ONE_ROUND_NOMINAL)
    (tmp_path / "i.pm").write_text(ONE_ROUND_IMPL)
    n, i = str(tmp_path / "n.pm"), str(tmp_path / "i.pm")
    assert run(capsys, "check", n, i)[0] == 1
    code, out, _ = run(capsys, "value", n, i, "--milestone", "f=1", "--json")
    assert code == 0 and json.loads(out)["value"] == 1.0


def test_check_report_dir(capsys, tmp_path):
    code, out, _ = run(capsys, "check", NOM, FAULTY, "--report-dir", str(tmp_path))
    assert code == 1
    for name in ("summary.csv", "u_levels.csv", "u_levels.png"):
        assert (tmp_path / name).stat().st_size > 0
    rows = list(csv.DictReader((tmp_path / "summary.csv").open()))
    assert {"field": "verdict", "value": "not-masking"} in rows
    assert (tmp_path / "u_levels.png").read_bytes()[:4] == b"\x89PNG"


def test_value_report_dir(capsys, tmp_path):
    code, _, _ = run(capsys, "value", NOM, FAULTY, "--milestone", "fault=1", "--report-dir", str(tmp_path))
    assert code == 0
    for name in ("summary.csv", "values.csv", "convergence.csv", "convergence.png"):
        assert (tmp_path / name).stat().st_size > 0
    conv = list(csv.reader((tmp_path / "convergence.csv").open()))
    assert conv[0] == ["iteration", "max_change"] and len(conv) > 100


def test_graph(capsys):
    code, out, _ = run(capsys, "graph", NOM, FAULTY)
    c = json.loads(out)["counts"]
    assert code == 0 and (c["refuter"], c["verifier"], c["probabilistic"], c["edges"]) == (48, 288, 84, 725)
    _, out, _ = run(capsys, "graph", NOM, FAULTY, "--snippet")
    assert json.loads(out)["counts"]["probabilistic"] == 116
    _, out, _ = run(capsys, "graph", NOM, FAULTY, "--format", "dot")
    assert out.startswith("digraph") and "v_err" in out


def test_hidden_oracle_command(capsys):
    code, out, _ = run(capsys, "oracle", NOM, FAULTY, "--milestone", "tick=1")
    assert code == 0 and "= 80" in out
    _, out, _ = run(capsys, "--help")
    assert "graph" in out and "oracle" not in out


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "maskft.cli", "check", NOM, LIMITED],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "verdict: masking" in proc.stdout
