"""Deterministic JSON reports: sorted keys, floats as %.17g, NaN rejected.

Infinite values appear legitimately (vacuous margins over empty index
sets) and are written as the strings "inf" / "-inf".  Wall-clock timings
are left out unless explicitly requested, so identical runs give
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ReportError", "AnalysisReport", "dumps", "emit_report", "document_hash"]


class ReportError(ValueError):
    pass


def _encode(obj, path: str, out: list, indent: int):
    pad = " " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            raise ReportError(f"NaN at {path or '<root>'}")
        if math.isinf(v):
            out.append('"inf"' if v > 0 else '"-inf"')
        else:
            out.append("%.17g" % v)
    elif isinstance(obj, str):
        out.append(_string(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        keys = sorted(obj, key=str)
        out.append("{\n")
        for i, k in enumerate(keys):
            out.append(pad + " " + _string(str(k)) + ": ")
            _encode(obj[k], f"{path}.{k}", out, indent + 1)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            _encode(v, f"{path}[{i}]", out, indent)
            if i < len(obj) - 1:
                out.append(", ")
        out.append("]")
    else:
        raise ReportError(f"cannot serialize {type(obj).__name__} at {path or '<root>'}")


def _string(s: str) -> str:
    return json.dumps(s, ensure_ascii=True)


def dumps(obj) -> str:
    out: list[str] = []
    _encode(obj, "", out, 0)
    return "".join(out) + "\n"


def document_hash(doc: dict) -> str:
    return hashlib.sha256(dumps(doc).encode()).hexdigest()


@dataclass
class AnalysisReport:
    command: str
    problem: str | None = None
    problem_hash: str | None = None
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "command": self.command,
            "problem": self.problem,
            "problem_hash": self.problem_hash,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "sections": self.sections,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }
        if include_timings:
            out["timings"] = self.timings
        return out


def emit_report(report: AnalysisReport, path, include_timings: bool = False) -> str:
    """Serialize ``report``; writes to ``path`` unless it is None or "-". Returns the text."""
    text = dumps(report.to_dict(include_timings))
    if path is not None and str(path) != "-":
        Path(path).write_text(text)
    return text
