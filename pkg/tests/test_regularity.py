import numpy as np
import pytest

from mmstab.conditions import reduced_upper_hessian
from mmstab.corpus import builtin
from mmstab.kkt import active_sets, kojima_b_subdiff_element, kojima_jacobian, to_kojima
from mmstab.regularity import (
    certify_strong_regularity,
    coupling_term,
    homeomorphism_probe,
    lipschitz_experiment,
    lipschitz_stability,
    schur_reduced_matrix,
)

from conftest import generated


class TestCertificate:
    def test_p3_vertices(self, p3):
        cert = certify_strong_regularity(p3.spec, p3.solution)
        assert cert.beta0_size == 1
        dets = {tuple(v["omega"]): v["det"] for v in cert.vertices}
        assert dets[(0.0,)] == pytest.approx(5.0, abs=1e-9)
        assert dets[(1.0,)] == pytest.approx(2.0, abs=1e-9)
        assert cert.certified and cert.det_signs_agree and cert.schur_agreement

    @pytest.mark.parametrize("w", [0.0, 0.5, 1.0])
    def test_p3_det_line(self, p3, w):
        k = to_kojima(p3.spec, p3.solution)
        V = kojima_b_subdiff_element(p3.spec, k, [w])
        assert np.linalg.det(V) == pytest.approx(5.0 - 3.0 * w, abs=1e-9)

    def test_edited_not_certified(self, p3_edited):
        cert = certify_strong_regularity(p3_edited.spec, p3_edited.solution)
        dets = sorted(v["det"] for v in cert.vertices)
        assert dets == pytest.approx([-3.0, 2.0], abs=1e-9)
        assert not cert.det_signs_agree
        assert not cert.certified

    def test_strict_case_is_classical_jacobian(self, p1):
        cert = certify_strong_regularity(p1.spec, p1.solution)
        assert cert.beta0_size == 0 and len(cert.vertices) == 1 and cert.interior == []
        J = kojima_jacobian(p1.spec, to_kojima(p1.spec, p1.solution))
        s = np.linalg.svd(J, compute_uv=False)
        assert cert.vertices[0]["sigma_min"] == pytest.approx(s[-1], rel=1e-12)
        assert cert.vertices[0]["det"] == pytest.approx(np.linalg.det(J), rel=1e-12)

    def test_degenerate_lower_split_is_not_enumerated(self):
        b = builtin("neg-lower-sc")
        cert = certify_strong_regularity(b.spec, b.solution)
        assert not cert.certified and cert.vertices == [] and cert.notes

    def test_interior_not_much_worse_than_vertices(self, p3):
        cert = certify_strong_regularity(p3.spec, p3.solution, seed=4)
        assert cert.min_interior_sigma >= cert.min_vertex_sigma / 10

    def test_generated_schur_agreement(self):
        insts = generated(100, seed=77, beta_zero=None, max_n=4, max_m=4)
        checked = 0
        for inst in insts:
            cert = certify_strong_regularity(inst.spec, inst.solution)
            assert cert.schur_agreement, inst.config
            assert cert.certified == inst.expected["property_a"], inst.config
            for v in cert.vertices:
                if cert.certified:
                    assert v["sigma_min"] > 1e-10 * v["sigma_max"]
            checked += cert.beta0_size > 0
        assert checked >= 10

    def test_seed_is_reproducible(self, p3):
        a = certify_strong_regularity(p3.spec, p3.solution, seed=3).as_dict()
        b = certify_strong_regularity(p3.spec, p3.solution, seed=3).as_dict()
        assert a == b


class TestSchurMatrix:
    def test_p3_blocks(self, p3):
        S = schur_reduced_matrix(p3.spec, p3.solution, [0.0])
        Psi = reduced_upper_hessian(p3.spec, p3.solution)
        n = p3.spec.dims.n
        assert np.allclose(S[:n, :n], Psi)
        assert S[-1, -1] == -1.0

    def test_wrong_omega_length(self, p3):
        with pytest.raises(ValueError, match="expected"):
            schur_reduced_matrix(p3.spec, p3.solution, [0.0, 1.0])

    def test_det_ratio_constant_in_omega(self, p3):
        # det V(w) = det K_alpha * det(V/K_alpha), and K_alpha does not depend on w
        k = to_kojima(p3.spec, p3.solution)
        sets = active_sets(p3.spec, p3.solution)
        ratios = []
        for w in (0.0, 0.3, 0.9):
            dv = np.linalg.det(kojima_b_subdiff_element(p3.spec, k, [w]))
            ds = np.linalg.det(schur_reduced_matrix(p3.spec, p3.solution, [w], sets=sets))
            ratios.append(dv / ds)
        assert np.allclose(ratios, ratios[0], rtol=1e-9)


class TestCoupling:
    @pytest.mark.parametrize("seed", range(5))
    def test_identity_and_sign(self, seed):
        rng = np.random.default_rng(seed)
        J0 = rng.standard_normal((3, 4))
        w = rng.uniform(0, 1, 3)
        w[0] = 1.0  # excluded index
        a1 = rng.standard_normal(4)
        lhs, rhs = coupling_term(J0, w, a1)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)
        assert rhs >= 0.0

    def test_zero_weights(self):
        lhs, rhs = coupling_term(np.eye(2), [0.0, 0.0], [1.0, 2.0])
        assert lhs == rhs == 0.0


class TestLipschitz:
    def test_p3_stable(self, p3):
        chk = lipschitz_stability(p3.spec, p3.solution, delta=1e-3, count=50, seed=0)
        assert chk.coarse.solved == 50 and chk.fine.solved == 50
        assert chk.coarse.nonunique == 0 and chk.fine.nonunique == 0
        assert 0.5 <= chk.ratio <= 2.0
        assert chk.passed, chk.flags

    def test_zero_perturbation_has_zero_distance(self, p3):
        est = lipschitz_experiment(p3.spec, p3.solution, delta=1e-12, count=3, extra_starts=0)
        for s in est.samples:
            assert s.distance == pytest.approx(0.0, abs=1e-10)

    def test_edited_control_flagged(self, p3_edited):
        chk = lipschitz_stability(p3_edited.spec, p3_edited.solution, delta=1e-3, count=20, seed=0)
        assert not chk.passed and chk.flags

    def test_rejects_non_solution(self, p3):
        z = p3.solution.__class__(**{**p3.solution.__dict__, "x": p3.solution.x + 1.0})
        with pytest.raises(ValueError, match="not a solution"):
            lipschitz_experiment(p3.spec, z, count=1)

    def test_bad_arguments(self, p3):
        with pytest.raises(ValueError):
            lipschitz_experiment(p3.spec, p3.solution, delta=0.0)


class TestInjectivity:
    def test_p3_positive(self, p3):
        rep = homeomorphism_probe(p3.spec, p3.solution, count=200)
        assert rep.passed and rep.min_ratio > 0

    def test_p1_matches_sigma_min(self, p1):
        # F is affine near a strictly complementary point, so the ratio is bounded below by sigma_min
        J = kojima_jacobian(p1.spec, to_kojima(p1.spec, p1.solution))
        smin = np.linalg.svd(J, compute_uv=False)[-1]
        rep = homeomorphism_probe(p1.spec, p1.solution, radius=1e-3, count=2000, seed=1)
        assert smin * 0.999 <= rep.min_ratio <= smin * 1.1

    def test_identical_pairs_skipped(self, p1):
        k = to_kojima(p1.spec, p1.solution).vector()
        rep = homeomorphism_probe(p1.spec, p1.solution, pairs=[(k, k), (k, k + 1e-3)])
        assert rep.skipped == 1 and rep.evaluated == 1

    def test_all_identical(self, p1):
        k = to_kojima(p1.spec, p1.solution).vector()
        rep = homeomorphism_probe(p1.spec, p1.solution, pairs=[(k, k)])
        assert rep.min_ratio is None and not rep.passed
