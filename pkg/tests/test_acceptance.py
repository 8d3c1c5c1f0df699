"""Acceptance criteria, one test per criterion (test_criterion_<k>_...).

A summary line per criterion is printed at the end of the run by the
terminal-summary hook in conftest.py.
"""

import time

import numpy as np
import pytest

from mmstab import cli
from mmstab.conditions import check_upper_conditions, lower_solution_at
from mmstab.corpus import all_builtins, builtin, parametric_p3
from mmstab.diff import fd_value_hessian
from mmstab.generator import GeneratorConfig, generate_parametric
from mmstab.kkt import KojimaPoint, kojima_b_subdiff_element, kojima_eval, to_kojima
from mmstab.lower import check_lower_ju, solve_lower
from mmstab.oracle import GridOracleConfig, grid_minimax_check, growth_check
from mmstab.problem import freeze_parameter
from mmstab.regularity import certify_strong_regularity, lipschitz_stability
from mmstab.sensitivity import value_hessian, verify_schur_identity
from mmstab.solver import NewtonOptions, newton_kojima, quadratic_tail_constant, track_path

from conftest import generated


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.2f} s, limit {self.limit} s"


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def test_criterion_1_schur_identity():
    with Clock(5.0):
        insts = generated(100, seed=101, beta_zero=None, max_n=6, max_m=6, max_m1=3, max_m2=3)
        for inst in insts:
            sol = lower_solution_at(inst.spec, inst.solution)
            assert check_lower_ju(inst.spec, inst.solution.x, sol).passed
            rep = verify_schur_identity(inst.spec, inst.solution.x, sol, tol=1e-8)
            assert rep.passed, (inst.config, rep.error)


def test_criterion_2_value_hessian():
    with Clock(10.0):
        closed = {"p1": 1.0, "p2": 0.0, "p3": 2.5}
        for name, want in closed.items():
            b = builtin(name)
            x, _ = next((x, w) for x, w in b.probes if w == want)
            sol = solve_lower(b.spec, x, np.zeros(b.spec.dims.m))
            H = value_hessian(b.spec, x, sol)
            assert H[0, 0] == want
            assert rel(H, fd_value_hessian(b.spec, x, sol)) <= 1e-4
        for inst in generated(20, seed=202, beta_zero=None, max_n=4, max_m=4):
            sol = lower_solution_at(inst.spec, inst.solution)
            x = inst.solution.x
            assert rel(value_hessian(inst.spec, x, sol), fd_value_hessian(inst.spec, x, sol)) <= 1e-4, inst.config


def test_criterion_3_nonsingularity():
    with Clock(5.0):
        cases = [(b.spec, b.solution) for b in all_builtins().values()]
        cases += [(i.spec, i.solution) for i in generated(30, seed=303, beta_zero=None, max_n=4, max_m=4)]
        certified = 0
        for spec, z in cases:
            cert = certify_strong_regularity(spec, z)
            if not cert.certified:
                continue
            certified += 1
            for v in cert.vertices:
                assert v["sigma_min"] > 1e-10 * v["sigma_max"]
        assert certified >= 20
        p3 = builtin("p3")
        k = to_kojima(p3.spec, p3.solution)
        for w in (0.0, 0.5, 1.0):
            assert abs(np.linalg.det(kojima_b_subdiff_element(p3.spec, k, [w])) - (5.0 - 3.0 * w)) <= 1e-9


def test_criterion_4_semismooth_newton():
    with Clock(5.0):
        rng = np.random.default_rng(404)
        p3 = builtin("p3")
        cases = [(p3.spec, p3.solution)] + [(i.spec, i.solution) for i in generated(20, seed=404)]
        for spec, z in cases:
            k_star = to_kojima(spec, z).vector()
            for _ in range(3):
                dk = rng.standard_normal(k_star.size)
                k0 = KojimaPoint.from_vector(spec.dims, k_star + 1e-2 * dk / np.linalg.norm(dk))
                k, tr = newton_kojima(spec, k0, opts=NewtonOptions(tol=1e-10, max_iter=10))
                assert tr.residuals[-1] <= 1e-10 and tr.iterations <= 10
                assert np.isfinite(quadratic_tail_constant(tr.residuals, pairs=3))
                assert quadratic_tail_constant(tr.residuals, pairs=3) <= 1e6
                assert np.max(np.abs(k.vector() - k_star)) <= 1e-8


def _fd_path(pspec, theta, k, h=1e-6):
    pts = []
    for s in (h, -h):
        spec = freeze_parameter(pspec, [theta + s])
        kk, _ = newton_kojima(spec, k, opts=NewtonOptions(tol=1e-14, max_iter=20))
        pts.append(kk.vector())
    return (pts[0] - pts[1]) / (2 * h)


def test_criterion_5_path_tracking():
    with Clock(10.0):
        p3_family = parametric_p3()
        gen_family, inst = generate_parametric(
            GeneratorConfig(n=3, m=2, m2=2, n2=2, alpha=1, beta_plus=1, seed=9))
        runs = [(p3_family, builtin("p3").solution, np.linspace(0.01, 0.1, 10), "def31"),
                (p3_family, builtin("p3").solution, np.linspace(0.01, 0.1, 10), "property_a"),
                (gen_family, inst.solution, np.linspace(0.0, 0.05, 10), "def31")]
        for pspec, z, grid, mode in runs:
            res = track_path(pspec, [[t] for t in grid], to_kojima(pspec.base_problem(), z), mode=mode)
            assert all(res.verdicts)
            assert len({s.key() for s in res.active_sets}) == 1
            for t, k, dk in zip(res.thetas, res.points, res.derivatives):
                assert np.max(np.abs(dk[:, 0] - _fd_path(pspec, t[0], k))) <= 1e-5


def test_criterion_6_strong_regularity():
    with Clock(15.0):
        p3 = builtin("p3")
        chk = lipschitz_stability(p3.spec, p3.solution, delta=1e-3, count=50, seed=0, agree=1e-8)
        assert chk.coarse.solved == 50 and chk.coarse.failed == 0 and chk.coarse.nonunique == 0
        assert 0.5 <= chk.ratio <= 2.0 and chk.passed
        ed = builtin("p3-edited")
        assert not certify_strong_regularity(ed.spec, ed.solution).certified
        assert not lipschitz_stability(ed.spec, ed.solution, delta=1e-3, count=50, seed=0).passed


def test_criterion_7_minimax_oracle():
    with Clock(30.0):
        for name, want in (("p1", True), ("p3", True), ("neg-concave", False)):
            b = builtin(name)
            verdicts = [grid_minimax_check(b.spec, b.solution.x, b.solution.y, GridOracleConfig(points=p)).passed
                        for p in (201, 401)]
            assert verdicts == [want, want], name


@pytest.mark.parametrize("name,g1,g2", [("p1", 1.0, 1.0), ("p3", 2.0, 2.5)])
def test_criterion_8_growth_constants(name, g1, g2):
    with Clock(10.0):
        b = builtin(name)
        rep = growth_check(b.spec, b.solution.x, b.solution.y)
        assert abs(rep.gamma1 - g1) <= 0.25 * g1 and abs(rep.gamma2 - g2) <= 0.25 * g2
        assert rep.worst_pointwise1 >= -1e-9 and rep.worst_pointwise2 >= -1e-9
        assert rep.passed


def test_criterion_9_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["selftest", "--seed", "0", "--report", str(a)]) == 0
    assert cli.main(["selftest", "--seed", "0", "--report", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_kojima_residual_sanity():
    # guards the premise of criteria 4 to 6: the stored points are zeros of F
    for b in all_builtins().values():
        assert np.max(np.abs(kojima_eval(b.spec, to_kojima(b.spec, b.solution))), initial=0.0) <= 1e-12
