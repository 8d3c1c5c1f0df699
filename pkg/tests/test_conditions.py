import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmstab.conditions import AFFINE, CRITICAL, check_upper_conditions, cone_basis, reduced_upper_hessian
from mmstab.corpus import EXPECTED, builtin
from mmstab.generator import GeneratorConfig, generate_instance
from mmstab.kkt import PrimalDualPoint
from mmstab.linalg import completion_for, cone_min_quadratic
from mmstab.lower import solve_lower
from mmstab.problem import ProblemSpec, QuadraticForm
from mmstab.sensitivity import value_hessian

from conftest import generated


class TestReducedHessian:
    def test_p3(self, p3):
        assert reduced_upper_hessian(p3.spec, p3.solution) == pytest.approx(np.array([[2.5]]))

    def test_p1(self, p1):
        assert reduced_upper_hessian(p1.spec, p1.solution)[0, 0] == pytest.approx(1.0)

    def test_edited(self, p3_edited):
        assert reduced_upper_hessian(p3_edited.spec, p3_edited.solution)[0, 0] == pytest.approx(-1.5)

    def test_upper_free_equals_value_hessian(self):
        inst = generate_instance(GeneratorConfig(n=3, m=2, m1=1, m2=2, alpha=1, seed=2))
        z = inst.solution
        sol = solve_lower(inst.spec, z.x, z.y, mu_init=z.mu, lam_init=z.lam)
        assert np.allclose(reduced_upper_hessian(inst.spec, z, sol), value_hessian(inst.spec, z.x, sol), atol=1e-12)


class TestConeBasis:
    def test_p3_affine(self, p3):
        cb = cone_basis(p3.spec, p3.solution, AFFINE)
        assert cb.dim == 1 and abs(cb.Z[0, 0]) == pytest.approx(1.0)

    def test_p3_strict(self, p3):
        assert cone_basis(p3.spec, p3.solution, CRITICAL).dim == 0

    def test_no_upper(self, p1):
        assert np.allclose(np.abs(cone_basis(p1.spec, p1.solution).Z), np.eye(1))

    def test_bad_selector(self, p1):
        with pytest.raises(ValueError):
            cone_basis(p1.spec, p1.solution, "other")

    def test_completion_basis_spans_same_space(self):
        inst = generate_instance(GeneratorConfig(n=4, m=2, n1=1, n2=2, beta_plus=1, seed=3))
        a = cone_basis(inst.spec, inst.solution, CRITICAL)
        C = completion_for(a.rows, 4) + 0.1 * np.random.default_rng(0).standard_normal((a.dim, 4))
        b = cone_basis(inst.spec, inst.solution, CRITICAL, completion=C)
        assert np.allclose(a.Z @ a.Z.T, b.Z @ b.Z.T, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_affine_hull_contains_strict_cone(seed):
    inst = generated(1, seed=seed, beta_zero=None)[0]
    Za = cone_basis(inst.spec, inst.solution, AFFINE).Z
    Zs = cone_basis(inst.spec, inst.solution, CRITICAL).Z
    if Zs.shape[1] == 0:
        return
    P = np.eye(Za.shape[0]) - Za @ Za.T
    assert np.linalg.norm(P @ Zs) <= 1e-10


class TestUpperConditions:
    def test_p3(self, p3):
        rep = check_upper_conditions(p3.spec, p3.solution)
        assert not rep.def31 and rep.def31_failures() == ["iii"]
        assert rep.sc_margin == 0.0
        assert rep.property_a and rep.strong_sosc_min_eig == pytest.approx(2.5)

    def test_p1(self, p1):
        rep = check_upper_conditions(p1.spec, p1.solution)
        assert rep.def31 and rep.property_a
        assert rep.sosc_min_eig == pytest.approx(1.0)

    def test_edited_fails_second_order(self, p3_edited):
        rep = check_upper_conditions(p3_edited.spec, p3_edited.solution)
        assert "v" in rep.def31_failures() and "v" in rep.property_a_failures()
        assert rep.strong_sosc_min_eig == pytest.approx(-1.5)

    @pytest.mark.parametrize("name", list(EXPECTED))
    def test_expected_matrix(self, name):
        b = builtin(name)
        rep = check_upper_conditions(b.spec, b.solution)
        assert rep.lower.passed == b.expected["lower_ju"]
        assert rep.def31 == b.expected["def31"]
        assert rep.property_a == b.expected["property_a"]

    def test_uncertified_lower_leaves_psi_undefined(self):
        b = builtin("neg-lower-sc")
        rep = check_upper_conditions(b.spec, b.solution)
        assert rep.Psi is None and rep.sosc_min_eig is None
        assert rep.as_dict()["Psi"] is None

    def test_def31_implies_property_a(self):
        for inst in generated(60, seed=41, beta_zero=None):
            rep = check_upper_conditions(inst.spec, inst.solution)
            if rep.def31:
                assert rep.property_a

    def test_scaling_objective(self):
        for inst in generated(10, seed=43):
            spec, z = inst.spec, inst.solution
            c = 3.0
            fm = spec.forms
            f = fm["f"]
            scaled = ProblemSpec.from_forms(spec.dims, QuadraticForm(c * f.Q, c * f.q, c * f.r),
                                            fm["h"], fm["g"], fm["H"], fm["G"])
            zc = PrimalDualPoint(x=z.x, u=c * z.u, v=c * z.v, y=z.y, mu=c * z.mu, lam=c * z.lam)
            a = check_upper_conditions(spec, z)
            b = check_upper_conditions(scaled, zc)
            assert (a.def31, a.property_a, a.lower.passed) == (b.def31, b.property_a, b.lower.passed)
            assert b.strong_sosc_min_eig == pytest.approx(c * a.strong_sosc_min_eig, rel=1e-9)
            assert b.lower.sosc_max_eig == pytest.approx(c * a.lower.sosc_max_eig, rel=1e-9)


class TestPolyhedralCone:
    def test_matches_sampling(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            k = 3
            R = rng.standard_normal((k, k))
            M = 0.5 * (R + R.T)
            A0 = rng.standard_normal((2, k))
            got = cone_min_quadratic(M, np.eye(k), A0)
            t = rng.standard_normal((200_000, k))
            t /= np.linalg.norm(t, axis=1, keepdims=True)
            t = t[np.all(t @ A0.T <= 0, axis=1)]
            vals = np.einsum("ij,jk,ik->i", t, M, t)
            assert vals.min() >= got - 1e-12
            assert vals.min() <= got + 2e-2

    def test_subspace_case(self):
        M = np.diag([3.0, -1.0])
        assert cone_min_quadratic(M, np.eye(2), np.zeros((0, 2))) == pytest.approx(-1.0)

    def test_halfline(self):
        # cone {t <= 0} in R^1 with M = -1.5
        assert cone_min_quadratic(np.array([[-1.5]]), np.eye(1), np.array([[1.0]])) == pytest.approx(-1.5)

    def test_trivial_cone(self):
        assert cone_min_quadratic(np.eye(2), np.zeros((2, 0)), np.zeros((0, 2))) == float("inf")
