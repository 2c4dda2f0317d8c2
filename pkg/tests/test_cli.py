import json
from fractions import Fraction

import pytest

from prsm import programs
from prsm.cli import main

from conftest import HAND_TEXT


def run_json(capsys, argv):
    code = main(argv + ["--json"])
    return code, json.loads(capsys.readouterr().out)


def test_analyze_running_example(capsys):
    code, rep = run_json(capsys, ["analyze", "gamblers_ruin", "-d", "2", "-k", "2"])
    assert code == 0 and rep["result"] == "yes"
    assert rep["grid"]["ok"] and rep["max_residual"] == 0.0
    assert set(rep["eta"]) == {"1", "2", "3", "4", "5", "6"}


def test_linear_template_fails_on_running_example(capsys):
    code, rep = run_json(capsys, ["analyze", "gamblers_ruin", "-d", "1", "-k", "2"])
    assert code == 2 and rep["result"] == "fail"


def test_logistic_map_linear(capsys):
    code, rep = run_json(capsys, ["analyze", "logistic_map", "-d", "1", "-k", "3"])
    assert code == 0 and rep["result"] == "yes"


@pytest.mark.parametrize("argv", [
    [],
    ["analyze"],
    ["analyze", "gamblers_ruin", "--method", "bogus"],
    ["analyze", "no_such_program"],
    ["verify", "/nonexistent/cert.json"],
    ["corpus", "no_such_program"],
    ["verify", "gamblers_ruin", "--eta", "1 x"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1


def test_certificate_round_trip(tmp_path, capsys):
    cert = tmp_path / "gr.json"
    assert main(["analyze", "gamblers_ruin", "-d", "2", "-k", "2", "--certificate", str(cert)]) == 0
    capsys.readouterr()
    code, rep = run_json(capsys, ["verify", str(cert)])
    assert code == 0 and rep["result"] == "yes" and rep["max_residual"] == 0.0
    assert main(["--verify", str(cert)]) == 0


def test_tampered_certificate_is_rejected(tmp_path, capsys):
    cert = tmp_path / "gr.json"
    assert main(["analyze", "gamblers_ruin", "-d", "2", "-k", "2", "--certificate", str(cert)]) == 0
    data = json.loads(cert.read_text())
    data["eta"]["3"] = {"text": "x", "coefficients": {"x": "1"}}
    cert.write_text(json.dumps(data))
    capsys.readouterr()
    assert main(["verify", str(cert)]) == 2
    data["eta"]["3"] = "x"
    cert.write_text(json.dumps(data))
    assert main(["verify", str(cert)]) == 1
    cert.write_text("{not json")
    assert main(["verify", str(cert)]) == 1


def test_verify_handwritten_eta(capsys):
    argv = ["verify", "gamblers_ruin", "--epsilon", "0.2", "--K", "-0.2"]
    for label, text in HAND_TEXT.items():
        argv += ["--eta", f"{label}:{text}"]
    code, rep = run_json(capsys, argv)
    assert code == 0 and rep["result"] == "yes"
    assert Fraction(rep["ub"]) == 151


def test_verify_rejects_bad_handwritten_eta(capsys):
    argv = ["verify", "gamblers_ruin", "--epsilon", "0.2", "--K", "-0.2"]
    for label in range(1, 7):
        argv += ["--eta", f"{label}:x"]
    code, rep = run_json(capsys, argv)
    assert code == 2 and rep["result"] == "fail"


def test_min_ub_is_monotone_in_k(capsys):
    ubs = []
    for k in (2, 3):
        code, rep = run_json(capsys, ["analyze", "gamblers_ruin", "-d", "2", "-k", str(k), "--objective", "min-ub"])
        assert code == 0
        ubs.append(Fraction(rep["ub"]))
    # a larger k only adds products, so the optimum cannot get worse
    assert ubs[1] <= ubs[0]


def test_text_report_and_plots(tmp_path, capsys):
    code = main(["analyze", "gamblers_ruin", "-d", "2", "-k", "2", "--diff-bounded", "--tail", "500,1000",
                 "--simulate", "500", "--plot", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0 and "yes" in out
    pngs = sorted(p.name for p in tmp_path.glob("*.png"))
    assert pngs, out


def test_cfg_and_corpus_commands(capsys):
    assert main(["corpus"]) == 0
    assert capsys.readouterr().out.split() == list(programs.NAMES)
    assert main(["corpus", "gamblers_ruin"]) == 0
    assert capsys.readouterr().out == programs.source("gamblers_ruin")
    assert main(["cfg", "gamblers_ruin"]) == 0
    assert capsys.readouterr().out.strip()


def test_simulate_command(capsys):
    code = main(["simulate", "gamblers_ruin", "--trials", "500", "--tail", "100", "--json"])
    d = json.loads(capsys.readouterr().out)
    assert code == 0 and d["trials"] == 500 and d["censored"] == 0
    assert main(["simulate", "gamblers_ruin", "--trials", "200", "--scheduler", "scripted", "--script", "2:1"]) == 0
    assert "scripted" in capsys.readouterr().out


def test_sdp_emit_and_ingest(tmp_path, capsys):
    path = tmp_path / "decay.dat-s"
    code = main(["analyze", "decay", "-d", "1", "-k", "2", "--method", "putinar",
                 "--sdp-solver", "none", "--emit-sdp", str(path)])
    capsys.readouterr()
    assert path.exists() and code in (0, 2)
    first = path.read_text().splitlines()
    assert int(first[0]) > 0
    bad = tmp_path / "bad.sol"
    bad.write_text("garbage\n")
    assert main(["analyze", "decay", "-d", "1", "-k", "2", "--method", "putinar",
                 "--ingest-sdp", str(bad)]) == 1
