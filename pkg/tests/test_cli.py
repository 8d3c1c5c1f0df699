import json
import subprocess
import sys

import numpy as np
import pytest

from mmstab import cli
from mmstab.corpus import builtin
from mmstab.problem import Dimensions, ParametricProblemSpec, QuadraticForm, parametric_to_document, problem_to_document


def write_case(tmp_path, name, with_solution=True):
    b = builtin(name)
    doc = {"problem": problem_to_document(b.spec)}
    if with_solution:
        doc["solution"] = {k: np.asarray(v).tolist() for k, v in b.solution.__dict__.items()}
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run(argv, tmp_path):
    out = tmp_path / "report.json"
    code = cli.main([*argv, "--report", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_check_p3_fails_strict_complementarity(tmp_path):
    code, rep = run(["check", write_case(tmp_path, "p3")], tmp_path)
    assert code == cli.EXIT_FAIL
    assert rep["verdicts"] == {"def31": False, "lower_ju": True, "property_a": True}


def test_check_p1_passes(tmp_path):
    code, rep = run(["check", write_case(tmp_path, "p1")], tmp_path)
    assert code == cli.EXIT_OK and rep["passed"]


def test_sens_fd_check(tmp_path):
    code, rep = run(["sens", write_case(tmp_path, "p1"), "--fd-check"], tmp_path)
    assert code == cli.EXIT_OK
    assert rep["verdicts"]["fd_match"]


def test_solve_without_solution(tmp_path):
    code, rep = run(["solve", write_case(tmp_path, "p3", with_solution=False), "--from-zero"], tmp_path)
    assert code == cli.EXIT_OK
    sec = rep["sections"]
    assert sec["final_residual"] <= 1e-10
    assert sec["solve"]["converged"] and sec["solve"]["residuals"]


def test_certify_builtin(tmp_path):
    code, rep = run(["certify", "builtin:p3"], tmp_path)
    assert code == cli.EXIT_OK and rep["verdicts"]["certified"]
    code, _ = run(["certify", "builtin:p3-edited"], tmp_path)
    assert code == cli.EXIT_FAIL


def test_oracle_control(tmp_path):
    assert run(["oracle", "builtin:neg-concave"], tmp_path)[0] == cli.EXIT_FAIL
    assert run(["oracle", "builtin:lq-3x2"], tmp_path)[0] == cli.EXIT_USAGE


def test_path_builtin(tmp_path):
    code, rep = run(["path", "builtin:p3-param"], tmp_path)
    assert code == cli.EXIT_OK and rep["verdicts"]["path"]


def test_path_divergence_is_numeric_failure(tmp_path):
    d = Dimensions(1, 1, n1=1)
    form = lambda Q, q, r=0.0: QuadraticForm(np.atleast_2d(Q).astype(float), np.atleast_1d(q).astype(float), r)  # noqa: E731
    pspec = ParametricProblemSpec.from_forms(
        {"f": form([[0, 1], [1, -1]], [0, 0]), "h": [], "g": [], "H": [form([[2.0]], [0.0], -1.0)], "G": []},
        {"H": [[form([[0.0]], [0.0], 1.0)]]}, d, 1, [0.0])
    doc = {"problem": parametric_to_document(pspec), "solution": {"x": [1.0], "y": [1.0], "u": [-0.5]}}
    path = tmp_path / "div.json"
    path.write_text(json.dumps(doc))
    code, _ = run(["path", str(path), "--theta-from", "0", "--theta-to", "10", "--nodes", "2"], tmp_path)
    assert code == cli.EXIT_NUMERIC


def test_gen_round_trip(tmp_path):
    out = tmp_path / "gen.json"
    code, rep = run(["gen", "--n", "2", "--m", "2", "--m2", "1", "--alpha", "1", "--seed", "3",
                     "--out", str(out)], tmp_path)
    assert code == cli.EXIT_OK and rep["verdicts"]["intended_certificate"]
    assert run(["check", str(out)], tmp_path)[0] == cli.EXIT_OK


@pytest.mark.parametrize("argv", [
    ["check", "builtin:nope"],
    ["check", "/nonexistent/problem.json"],
    ["frobnicate", "builtin:p1"],
    ["path", "builtin:p1"],
])
def test_usage_errors(argv, tmp_path):
    assert run(argv, tmp_path)[0] == cli.EXIT_USAGE


def test_malformed_document(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "x", "dims": {"n": 1}}))
    assert run(["check", str(path)], tmp_path)[0] == cli.EXIT_USAGE


def test_nan_report_is_numeric_failure(tmp_path, monkeypatch):
    real = cli.COMMANDS["check"]

    def poisoned(args):
        rep = real(args)
        rep.sections["bad"] = float("nan")
        return rep

    monkeypatch.setitem(cli.COMMANDS, "check", poisoned)
    assert run(["check", "builtin:p1"], tmp_path)[0] == cli.EXIT_NUMERIC


def test_timings_flag(tmp_path):
    _, plain = run(["check", "builtin:p1"], tmp_path)
    _, timed = run(["check", "builtin:p1", "--timings"], tmp_path)
    assert "timings" not in plain and "timings" in timed


def test_selftest_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["selftest", "--report", str(a)]) == cli.EXIT_OK
    assert cli.main(["selftest", "--report", str(b)]) == cli.EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_console_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mmstab.cli", "check", "builtin:p1"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["passed"]
