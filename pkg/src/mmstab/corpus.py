"""Builtin problems with known solutions and their expected certificate matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .kkt import PrimalDualPoint
from .problem import Dimensions, ParametricProblemSpec, ProblemSpec, QuadraticForm, parse_problem

__all__ = ["Builtin", "builtin", "builtin_names", "all_builtins", "parametric_p1", "parametric_p3",
           "EXPECTED"]


def _form(Q, q, r=0.0) -> QuadraticForm:
    return QuadraticForm(np.atleast_2d(np.asarray(Q, dtype=float)), np.atleast_1d(np.asarray(q, dtype=float)), r)


@dataclass
class Builtin:
    spec: ProblemSpec
    solution: PrimalDualPoint
    expected: dict
    note: str = ""
    # extra lower-level probe points (x values) with known phi''
    probes: list = field(default_factory=list)


# verdicts per builtin: lower JU, full conditions (def31), Property A, strong-regularity certificate (certified)
EXPECTED = {
    "p1": {"lower_ju": True, "def31": True, "property_a": True, "certified": True},
    "p2": {"lower_ju": True, "def31": True, "property_a": True, "certified": True},
    "p2-extended": {"lower_ju": True, "def31": True, "property_a": True, "certified": True},
    "p3": {"lower_ju": True, "def31": False, "property_a": True, "certified": True},
    "p3-edited": {"lower_ju": True, "def31": False, "property_a": False, "certified": False},
    "neg-concave": {"lower_ju": True, "def31": False, "property_a": False, "certified": False},
    "neg-lower-sosc": {"lower_ju": False, "def31": False, "property_a": False, "certified": False},
    "neg-lower-sc": {"lower_ju": False, "def31": False, "property_a": False, "certified": False},
    "lq-3x2": {"lower_ju": True, "def31": False, "property_a": True, "certified": True},
}

_SADDLE = [[0.0, 1.0], [1.0, -1.0]]  # f = xy - y^2/2


def _p1():
    d = Dimensions(1, 1)
    spec = ProblemSpec.from_forms(d, _form(_SADDLE, [0, 0]), name="p1")
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0]), EXPECTED["p1"],
                   "f = xy - y^2/2; phi = x^2/2", probes=[([0.3], 1.0)])


def _p2():
    d = Dimensions(1, 1, m2=1)
    spec = ProblemSpec.from_forms(d, _form(_SADDLE, [0, 0]), g=[_form(np.zeros((2, 2)), [0, 1], -1.0)], name="p2")
    # full-problem minimizer sits at x = 0 where y <= 1 is inactive
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0]), EXPECTED["p2"],
                   "f = xy - y^2/2, g = y - 1; phi'' = 0 on x > 1", probes=[([2.0], 0.0), ([0.5], 1.0)])


def _p2_extended():
    d = Dimensions(1, 1, m2=2)
    g = [_form(np.zeros((2, 2)), [0, 1], -1.0), _form(np.zeros((2, 2)), [0, 1], -3.0)]
    spec = ProblemSpec.from_forms(d, _form(_SADDLE, [0, 0]), g=g, name="p2-extended")
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0]), EXPECTED["p2-extended"],
                   "p2 plus inactive y <= 3", probes=[([2.0], 0.0)])


def _p3(edited: bool = False):
    d = Dimensions(1, 1, n2=1)
    Q = [[2.0 - (4.0 if edited else 0.0), 1.0], [1.0, -2.0]]
    name = "p3-edited" if edited else "p3"
    spec = ProblemSpec.from_forms(d, _form(Q, [0, 0]), G=[_form([[0.0]], [-1.0])], name=name)
    note = "f = -x^2 + xy - y^2, G = -x; Psi = -1.5" if edited else "f = x^2 + xy - y^2, G = -x; Psi = 2.5"
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0], v=[0.0]), EXPECTED[name], note,
                   probes=[([0.0], -1.5 if edited else 2.5)])


def _neg_concave():
    d = Dimensions(1, 1)
    spec = ProblemSpec.from_forms(d, _form([[-2.0, 0.0], [0.0, -2.0]], [0, 0]), name="neg-concave")
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0]), EXPECTED["neg-concave"],
                   "f = -x^2 - y^2; x* = 0 maximizes phi", probes=[([0.0], -2.0)])


def _neg_lower_sosc():
    d = Dimensions(1, 1)
    spec = ProblemSpec.from_forms(d, _form([[0.0, 1.0], [1.0, 1.0]], [0, 0]), name="neg-lower-sosc")
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0]), EXPECTED["neg-lower-sosc"],
                   "f = xy + y^2/2; lower problem is convex")


def _neg_lower_sc():
    d = Dimensions(1, 1, m2=1)
    spec = ProblemSpec.from_forms(d, _form(_SADDLE, [0, 0]), g=[_form(np.zeros((2, 2)), [0, 1])],
                                  name="neg-lower-sc")
    return Builtin(spec, PrimalDualPoint.make(d, [0.0], [0.0], lam=[0.0]), EXPECTED["neg-lower-sc"],
                   "f = xy - y^2/2, g = y; active with zero multiplier at x = 0")


def _lq_3x2():
    raw = resources.files("mmstab").joinpath("data/lq_3x2.json").read_text()
    doc = json.loads(raw)
    spec = parse_problem(doc["problem"])
    z = PrimalDualPoint.make(spec.dims, **doc["solution"])
    return Builtin(spec, z, EXPECTED["lq-3x2"], "generated 3+2 instance with beta+, beta0, beta^c, alpha, alpha^c")


_BUILDERS = {
    "p1": _p1,
    "p2": _p2,
    "p2-extended": _p2_extended,
    "p3": _p3,
    "p3-edited": lambda: _p3(True),
    "neg-concave": _neg_concave,
    "neg-lower-sosc": _neg_lower_sosc,
    "neg-lower-sc": _neg_lower_sc,
    "lq-3x2": _lq_3x2,
}


def builtin_names() -> list[str]:
    return list(_BUILDERS)


def builtin(name: str) -> Builtin:
    if name not in _BUILDERS:
        raise KeyError(f"unknown builtin {name!r}; choose from {builtin_names()}")
    return _BUILDERS[name]()


def all_builtins() -> dict[str, Builtin]:
    return {k: builtin(k) for k in _BUILDERS}


def parametric_p3() -> ParametricProblemSpec:
    """G(x, theta) = -x + theta; solution x = theta, v = 5 theta / 2, y = theta / 2 for theta > 0."""
    b = _p3()
    dG = [[_form([[0.0]], [0.0], 1.0)]]
    return ParametricProblemSpec.from_forms(b.spec.forms, {"G": dG}, b.spec.dims, 1, [0.0], name="p3-param")


def parametric_p1() -> ParametricProblemSpec:
    """f + theta x; solution x = y = -theta."""
    b = _p1()
    return ParametricProblemSpec.from_forms(b.spec.forms, {"f": [_form(np.zeros((2, 2)), [1.0, 0.0])]},
                                            b.spec.dims, 1, [0.0], name="p1-param")
