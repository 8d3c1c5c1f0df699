import json
import math

import numpy as np
import pytest

from mmstab.report import AnalysisReport, ReportError, document_hash, dumps, emit_report


def test_sorted_and_exact_floats():
    text = dumps({"b": 0.1, "a": [1, 2.5], "c": np.float64(1 / 3)})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    back = json.loads(text)
    assert back["b"] == 0.1 and back["c"] == 1 / 3


def test_round_trip_of_floats():
    vals = [math.pi, 1e-300, -2.5e17, 5e-324]
    assert json.loads(dumps(vals)) == vals


def test_nan_rejected_with_path():
    with pytest.raises(ReportError, match=r"\.x\[1\]"):
        dumps({"x": [0.0, float("nan")]})


def test_infinity_as_string():
    back = json.loads(dumps({"a": float("inf"), "b": -np.inf}))
    assert back == {"a": "inf", "b": "-inf"}


def test_numpy_types():
    back = json.loads(dumps({"m": np.eye(2), "k": np.int64(3), "t": np.bool_(True)}))
    assert back == {"m": [[1.0, 0.0], [0.0, 1.0]], "k": 3, "t": True}


def test_unknown_type():
    with pytest.raises(ReportError, match="cannot serialize"):
        dumps({"s": {1, 2}})


def test_hash_ignores_key_order():
    assert document_hash({"a": 1, "b": 2}) == document_hash({"b": 2, "a": 1})


def test_timings_excluded_by_default(tmp_path):
    rep = AnalysisReport(command="x", verdicts={"ok": True}, timings={"total": 1.23})
    text = emit_report(rep, tmp_path / "r.json")
    assert "timings" not in json.loads(text)
    assert (tmp_path / "r.json").read_text() == text
    assert json.loads(emit_report(rep, None, include_timings=True))["timings"] == {"total": 1.23}


def test_passed_is_conjunction():
    assert AnalysisReport(command="x", verdicts={"a": True, "b": 1}).passed
    assert not AnalysisReport(command="x", verdicts={"a": True, "b": False}).passed
    assert AnalysisReport(command="x").passed


def test_deterministic_bytes():
    rep = AnalysisReport(command="x", sections={"v": [0.1, 0.2 + 0.1]}, verdicts={"ok": True})
    assert emit_report(rep, None) == emit_report(rep, None)
