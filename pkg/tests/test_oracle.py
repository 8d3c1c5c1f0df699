import numpy as np
import pytest

from mmstab.conditions import reduced_upper_hessian
from mmstab.corpus import builtin
from mmstab.oracle import GridOracleConfig, OracleError, brute_lower_max, grid_minimax_check, growth_check
from mmstab.problem import Dimensions, ProblemSpec, QuadraticForm


def lq(dims, Q, q, G=()):
    f = QuadraticForm(np.asarray(Q, dtype=float), np.asarray(q, dtype=float), 0.0)
    return ProblemSpec.from_forms(dims, f, G=G)


def run(name, **kw):
    b = builtin(name)
    return grid_minimax_check(b.spec, b.solution.x, b.solution.y, GridOracleConfig(**kw))


class TestMinimax:
    @pytest.mark.parametrize("name", ["p1", "p2", "p3"])
    def test_certified_points_pass(self, name):
        v = run(name)
        assert v.passed and not v.anomalies
        assert [lv["delta"] for lv in v.levels] == [0.1, 0.05, 0.025, 0.0125]

    def test_concave_control_fails_right_side(self):
        v = run("neg-concave")
        assert not v.passed
        assert all(lv["left_ok"] for lv in v.levels)
        assert not any(lv["right_ok"] for lv in v.levels)
        # phi(x) = -x^2 on the ball, so the worst slack is -delta^2
        assert v.levels[0]["right_slack"] == pytest.approx(-0.01, rel=1e-9)

    def test_edited_control_fails(self):
        assert not run("p3-edited").passed

    @pytest.mark.parametrize("name", ["p1", "p3", "neg-concave"])
    def test_grid_doubling_stable(self, name):
        assert run(name).passed == run(name, points=401).passed

    def test_inner_maximum_shifted_point_fails_left(self, p1):
        # y = 0.05 is not the lower maximizer at x = 0
        v = grid_minimax_check(p1.spec, [0.0], [0.05])
        assert not v.levels[0]["left_ok"]

    def test_dimension_limit(self):
        b = builtin("lq-3x2")
        with pytest.raises(OracleError, match="n, m <= 2"):
            grid_minimax_check(b.spec, b.solution.x, b.solution.y)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GridOracleConfig(points=2)
        with pytest.raises(ValueError):
            GridOracleConfig(delta0=0.0)
        assert GridOracleConfig().eta(0.05) == 0.1


class TestGrowth:
    @pytest.mark.parametrize("name,g1,g2", [("p1", 1.0, 1.0), ("p3", 2.0, 2.5)])
    def test_closed_forms(self, name, g1, g2):
        b = builtin(name)
        rep = growth_check(b.spec, b.solution.x, b.solution.y)
        assert rep.gamma1 == pytest.approx(g1, rel=0.25)
        assert rep.gamma2 == pytest.approx(g2, rel=0.25)
        assert rep.worst_pointwise1 >= -1e-9 and rep.worst_pointwise2 >= -1e-9
        assert rep.passed

    @pytest.mark.parametrize("name", ["p1", "p3"])
    def test_gamma2_tracks_reduced_hessian(self, name):
        b = builtin(name)
        psi = np.linalg.eigvalsh(reduced_upper_hessian(b.spec, b.solution))[0]
        rep = growth_check(b.spec, b.solution.x, b.solution.y)
        assert rep.gamma2 == pytest.approx(psi, rel=0.01)

    def test_flat_value_function_fails(self):
        # f = -y^2/2 leaves phi constant, so there is no upper growth
        spec = lq(Dimensions(1, 1), [[0, 0], [0, -1]], [0, 0])
        rep = growth_check(spec, [0.0], [0.0])
        assert rep.gamma2 == 0.0 and not rep.passed

    def test_linear_growth_is_not_quadratic(self):
        # f = x - y^2/2 on x >= 0: phi grows linearly, far from a quadratic profile
        G = QuadraticForm(np.zeros((1, 1)), np.array([-1.0]), 0.0)
        spec = lq(Dimensions(1, 1, n2=1), [[0, 0], [0, -1]], [1, 0], G=[G])
        rep = growth_check(spec, [0.0], [0.0])
        assert rep.residual2 > 0.2
        assert rep.min_ratio2 >= 19.0

    def test_concave_fails(self):
        b = builtin("neg-concave")
        rep = growth_check(b.spec, b.solution.x, b.solution.y)
        assert rep.gamma2 == pytest.approx(-2.0) and not rep.passed


class TestBruteLower:
    def test_p1(self, p1):
        y, val = brute_lower_max(p1.spec, [0.3], (-1.0, 1.0))
        assert y == pytest.approx([0.3], abs=1e-12)
        assert val == pytest.approx(0.045)

    def test_p2_constraint_binds(self, p2):
        y, val = brute_lower_max(p2.spec, [1.5], (-2.0, 2.0))
        assert y == pytest.approx([1.0], abs=1e-12)
        assert val == pytest.approx(1.0)

    def test_infeasible_box(self, p2):
        with pytest.raises(OracleError, match="no feasible"):
            brute_lower_max(p2.spec, [0.0], (2.0, 3.0))
