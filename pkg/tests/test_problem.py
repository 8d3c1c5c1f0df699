import json

import numpy as np
import pytest

from mmstab.corpus import builtin, parametric_p1, parametric_p3
from mmstab.problem import (
    Dimensions,
    EvaluatorBundle,
    ProblemFormatError,
    ProblemSpec,
    QuadraticForm,
    freeze_parameter,
    parametric_to_document,
    parse_parametric,
    parse_problem,
    problem_to_document,
    validate_spec,
)

P1_DOC = {"name": "p1", "dims": {"n": 1, "m": 1, "n1": 0, "n2": 0, "m1": 0, "m2": 0},
          "f": {"Q": [[0, 1], [1, -1]], "q": [0, 0], "r": 0}}


class TestParse:
    def test_p1_document(self):
        spec = parse_problem(json.dumps(P1_DOC))
        d = spec.dims
        assert (d.n, d.m, d.n1, d.n2, d.m1, d.m2) == (1, 1, 0, 0, 0, 0)
        assert spec.f([1.0], [1.0]) == pytest.approx(0.5)

    def test_asymmetric_block_rejected(self):
        doc = json.loads(json.dumps(P1_DOC))
        doc["f"]["Q"] = [[0, 1], [0.5, -1]]
        with pytest.raises(ProblemFormatError, match="asymmetric quadratic block"):
            parse_problem(doc)

    def test_p3_evaluators(self):
        spec = parse_problem(problem_to_document(builtin("p3").spec))
        assert spec.dims.n2 == 1
        assert spec.f([1.0], [1.0]) == pytest.approx(1.0)
        assert spec.G([1.0]) == pytest.approx([-1.0])

    @pytest.mark.parametrize("mutate, match", [
        (lambda d: d.pop("f"), "missing field"),
        (lambda d: d.update(extra=1), "unknown field"),
        (lambda d: d["dims"].update(m2=1), "g"),
        (lambda d: d["f"].update(q=[0, 0, 0]), "length-2"),
    ])
    def test_malformed(self, mutate, match):
        doc = json.loads(json.dumps(P1_DOC))
        mutate(doc)
        with pytest.raises(ProblemFormatError, match=match):
            parse_problem(doc)

    def test_not_json(self):
        with pytest.raises(ProblemFormatError):
            parse_problem("{not json")

    @pytest.mark.parametrize("name", ["p1", "p2", "p2-extended", "p3", "lq-3x2"])
    def test_round_trip(self, name):
        spec = builtin(name).spec
        again = parse_problem(json.dumps(problem_to_document(spec)))
        rng = np.random.default_rng(0)
        for _ in range(5):
            x, y = rng.standard_normal(spec.dims.n), rng.standard_normal(spec.dims.m)
            assert again.f(x, y) == spec.f(x, y)
            assert np.array_equal(again.g(x, y), spec.g(x, y))
            assert np.array_equal(again.G(x), spec.G(x))


def _broken(spec, **over):
    fields = {k: getattr(spec.bundle, k) for k in EvaluatorBundle.__dataclass_fields__}
    fields.update(over)
    return ProblemSpec(spec.dims, EvaluatorBundle(**fields), name="broken")


class TestValidate:
    def test_p1_passes(self):
        assert validate_spec(builtin("p1").spec).ok

    def test_wrong_length_flagged(self):
        spec = _broken(builtin("p2").spec, g=lambda z: np.zeros(2))
        rep = validate_spec(spec)
        assert not rep.ok and not rep.checks["dims.g"]

    def test_nondeterminism_flagged(self):
        rng = np.random.default_rng(0)
        spec = _broken(builtin("p1").spec, f=lambda z: float(rng.standard_normal()))
        rep = validate_spec(spec)
        assert not rep.ok and not rep.checks["determinism.f"]

    def test_asymmetric_hessian_flagged(self):
        spec = _broken(builtin("p1").spec, f_hess=lambda z: np.array([[0.0, 1.0], [0.0, -1.0]]))
        assert not validate_spec(spec).checks["symmetry.f_hess"]


class TestParametric:
    def test_freeze_at_base_matches(self):
        pspec = parametric_p3()
        base = builtin("p3").spec
        frozen = freeze_parameter(pspec, pspec.theta0)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x, y = rng.standard_normal(1), rng.standard_normal(1)
            assert abs(frozen.f(x, y) - base.f(x, y)) <= 1e-12
            assert np.max(np.abs(frozen.G(x) - base.G(x))) <= 1e-12

    def test_p1_tilt(self):
        spec = freeze_parameter(parametric_p1(), [0.1])
        assert spec.bundle.f_grad(np.zeros(2))[0] == pytest.approx(0.1)

    def test_wrong_length_theta(self):
        with pytest.raises(ValueError):
            freeze_parameter(parametric_p1(), [0.1, 0.2])

    def test_document_round_trip(self):
        pspec = parametric_p3()
        again = parse_parametric(json.dumps(parametric_to_document(pspec)))
        for t in (0.0, 0.05):
            a, b = freeze_parameter(pspec, [t]), freeze_parameter(again, [t])
            assert np.array_equal(a.G([0.3]), b.G([0.3]))

    def test_parameters_block_required(self):
        with pytest.raises(ProblemFormatError, match="parameters"):
            parse_parametric(P1_DOC)


def test_dimensions_reject_zero_n():
    with pytest.raises((ValueError, ProblemFormatError)):
        Dimensions(0, 1)


def test_form_dimension_mismatch():
    with pytest.raises(ProblemFormatError):
        ProblemSpec.from_forms(Dimensions(1, 1), QuadraticForm(np.eye(3), np.zeros(3)))
