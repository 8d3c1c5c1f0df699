"""Strong-regularity evidence at a KKT point.

Three independent pieces:

* vertex/interior enumeration of the generalized Jacobian over the
  degenerate weights, cross-checked against the Schur-reduced matrix;
* canonical-perturbation solves F(k) = eta with a multi-start uniqueness
  probe and a Lipschitz estimate that must be stable under halving delta;
* an injectivity probe ||F(k1) - F(k2)|| >= c ||k1 - k2|| near k*.

None of these proves anything; each is labelled as evidence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .conditions import check_upper_conditions, lower_solution_at, reduced_upper_hessian
from .kkt import (
    KojimaPoint,
    PrimalDualPoint,
    Tolerances,
    active_sets,
    degenerate_indices,
    kojima_b_subdiff_element,
    kojima_eval,
    to_kojima,
)
from .lower import LowerSolution
from .problem import ProblemSpec
from .solver import NewtonError, NewtonOptions, newton_kojima

__all__ = [
    "Caps",
    "StabilityCertificate",
    "schur_reduced_matrix",
    "coupling_term",
    "certify_strong_regularity",
    "PerturbationSample",
    "LipschitzEstimate",
    "lipschitz_experiment",
    "StabilityCheck",
    "lipschitz_stability",
    "InjectivityReport",
    "homeomorphism_probe",
]

NONSINGULAR_RATIO = 1e-10


@dataclass(frozen=True)
class Caps:
    enum: int = 16
    sample: int = 256
    interior: int = 64


def _sv(M):
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[-1]), float(s[0])


def _nonsingular(smin, smax) -> bool:
    return bool(smax > 0 and smin > NONSINGULAR_RATIO * smax)


def schur_reduced_matrix(spec: ProblemSpec, z: PrimalDualPoint, omega, Psi=None, sets=None,
                         tol_act: float = 1e-8) -> np.ndarray:
    """H(omega)/K_alpha with blocks [Psi, JH', JG_b+', JG_b0' diag(omega); JH; JG_b+; JG_b0, -I+diag(omega)]."""
    d = spec.dims
    sets = sets or active_sets(spec, z, tol_act)
    if Psi is None:
        Psi = reduced_upper_hessian(spec, z)
    JH = np.asarray(spec.bundle.H_jac(z.x), dtype=float).reshape(d.n1, d.n)
    JG = np.asarray(spec.bundle.G_jac(z.x), dtype=float).reshape(d.n2, d.n)
    Jp, J0 = JG[sets.beta_plus], JG[sets.beta_zero]
    omega = np.atleast_1d(np.asarray(omega, dtype=float)).reshape(-1)
    r1, r0 = Jp.shape[0], J0.shape[0]
    if omega.shape != (r0,):
        raise ValueError(f"omega has length {omega.shape[0]}, expected |beta0| = {r0}")
    size = d.n + d.n1 + r1 + r0
    M = np.zeros((size, size))
    a, b, c = d.n, d.n + d.n1, d.n + d.n1 + r1
    M[:a, :a] = Psi
    M[:a, a:b] = JH.T
    M[:a, b:c] = Jp.T
    M[:a, c:] = J0.T * omega
    M[a:b, :a] = JH
    M[b:c, :a] = Jp
    M[c:, :a] = J0
    M[c:, c:] = np.diag(omega - 1.0)
    return M


def coupling_term(J0: np.ndarray, omega, a1) -> tuple[float, float]:
    """Both sides of the coupling identity for a direction a1.

    Solves the last block row J0 a1 + (-I + omega) a4 = 0 for a4 on the
    indices with omega < 1 and returns (a1' diag(omega) J0' a4, sum
    omega_i / (1 - omega_i) (grad G_i' a1)^2) over those indices.
    """
    J0 = np.atleast_2d(np.asarray(J0, dtype=float))
    omega = np.asarray(omega, dtype=float).reshape(-1)
    a1 = np.asarray(a1, dtype=float).reshape(-1)
    keep = omega < 1.0
    s = J0[keep] @ a1
    a4 = s / (1.0 - omega[keep])
    lhs = float(a1 @ (J0[keep].T @ (omega[keep] * a4)))
    rhs = float(np.sum(omega[keep] / (1.0 - omega[keep]) * s**2))
    return lhs, rhs


@dataclass
class StabilityCertificate:
    property_a: bool
    property_a_failures: list
    beta0_size: int
    capped: bool
    vertices: list
    interior: list
    schur_agreement: bool
    det_signs_agree: bool
    overall: bool
    seed: int
    contradiction: bool = False
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        """Property A plus nonsingular enumerated elements with one vertex determinant sign."""
        return self.property_a and self.overall and self.det_signs_agree

    @property
    def min_vertex_sigma(self) -> float:
        return min((v["sigma_min"] for v in self.vertices), default=float("inf"))

    @property
    def min_interior_sigma(self) -> float:
        return min((v["sigma_min"] for v in self.interior), default=float("inf"))

    def as_dict(self) -> dict:
        return {
            "property_a": self.property_a,
            "property_a_failures": self.property_a_failures,
            "beta0_size": self.beta0_size,
            "enumeration_capped": self.capped,
            "vertices": self.vertices,
            "interior": self.interior,
            "schur_agreement": self.schur_agreement,
            "vertex_det_signs_agree": self.det_signs_agree,
            "overall": self.overall,
            "certified": self.certified,
            "contradiction": self.contradiction,
            "notes": self.notes,
            "seed": self.seed,
        }


def _vertex_list(r0: int, caps: Caps, rng) -> tuple[list, bool]:
    if r0 <= caps.enum:
        return [np.array(v, dtype=float) for v in itertools.product((0.0, 1.0), repeat=r0)], False
    picks = [np.zeros(r0), np.ones(r0)]
    picks += [rng.integers(0, 2, size=r0).astype(float) for _ in range(caps.sample)]
    return picks, True


def certify_strong_regularity(spec: ProblemSpec, z: PrimalDualPoint, sol: LowerSolution | None = None,
                              tols: Tolerances = Tolerances(), caps: Caps = Caps(),
                              seed: int = 0) -> StabilityCertificate:
    """Property A verdict plus enumeration of generalized-Jacobian elements at z."""
    rng = np.random.default_rng(seed)
    if sol is None:
        sol = lower_solution_at(spec, z, tols.act)
    report = check_upper_conditions(spec, z, sol, tols)
    k = to_kojima(spec, z)
    dw, dxi = degenerate_indices(k, tols.act)
    sets = active_sets(spec, z, tols.act)
    r0 = dw.size
    if dxi.size:
        return StabilityCertificate(
            property_a=report.property_a, property_a_failures=report.property_a_failures(),
            beta0_size=r0, capped=False, vertices=[], interior=[], schur_agreement=True,
            det_signs_agree=False, overall=False, seed=seed,
            notes=[f"lower split degenerate at indices {(dxi + 1).tolist()}; no element enumerated"])
    Psi = report.Psi
    have_schur = Psi is not None and np.array_equal(np.sort(dw), sets.beta_zero)

    def element(omega):
        V = kojima_b_subdiff_element(spec, k, omega, tols.act)
        smin, smax = _sv(V)
        entry = {"omega": omega.tolist(), "sigma_min": smin, "sigma_max": smax,
                 "det": float(np.linalg.det(V)), "nonsingular": _nonsingular(smin, smax)}
        if have_schur:
            S = schur_reduced_matrix(spec, z, omega, Psi, sets)
            s2 = _sv(S) if S.size else (1.0, 1.0)
            entry["schur_nonsingular"] = _nonsingular(*s2)
        return entry

    verts, capped = _vertex_list(r0, caps, rng)
    vertices = [element(w) for w in verts]
    interior = [element(rng.uniform(0.0, 1.0, size=r0)) for _ in range(caps.interior)] if r0 else []
    everything = vertices + interior
    agree = all(e.get("schur_nonsingular", e["nonsingular"]) == e["nonsingular"] for e in everything)
    signs = {np.sign(v["det"]) for v in vertices}
    overall = all(e["nonsingular"] for e in everything)
    return StabilityCertificate(
        property_a=report.property_a,
        property_a_failures=report.property_a_failures(),
        beta0_size=r0,
        capped=capped,
        vertices=vertices,
        interior=interior,
        schur_agreement=agree,
        det_signs_agree=len(signs) == 1 and 0.0 not in signs,
        overall=overall,
        seed=seed,
        contradiction=report.property_a and not overall,
    )


@dataclass
class PerturbationSample:
    eta: np.ndarray
    k: KojimaPoint | None
    status: str
    distance: float | None
    residual: float | None = None
    starts_converged: int = 0
    spread: float = 0.0

    def as_dict(self) -> dict:
        return {"eta": self.eta.tolist(), "status": self.status, "distance": self.distance,
                "residual": self.residual, "starts_converged": self.starts_converged, "spread": self.spread,
                "k": None if self.k is None else self.k.as_dict()}


@dataclass
class LipschitzEstimate:
    value: float
    count: int
    delta: float
    seed: int
    solved: int
    failed: int
    nonunique: int
    samples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failed == 0 and self.nonunique == 0 and bool(np.isfinite(self.value))

    def as_dict(self) -> dict:
        return {"value": self.value, "count": self.count, "delta": self.delta, "seed": self.seed,
                "solved": self.solved, "failed": self.failed, "nonunique": self.nonunique,
                "passed": self.passed}


def _ball(rng, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / dim)


def solve_perturbed(spec: ProblemSpec, k0: KojimaPoint, eta, opts: NewtonOptions, starts=(),
                    agree: float = 1e-8, ball: float = np.inf) -> PerturbationSample:
    """Solve F(k) = eta from k0 and from extra starts; converged solutions inside the ball must agree."""
    eta = np.asarray(eta, dtype=float)
    try:
        k, trace = newton_kojima(spec, k0, eta, opts)
    except NewtonError:
        return PerturbationSample(eta=eta, k=None, status="failed", distance=None)
    base = k.vector()
    converged = 1
    spread = 0.0
    for s in starts:
        try:
            ks, _ = newton_kojima(spec, s, eta, opts)
        except NewtonError:
            continue
        if np.linalg.norm(ks.vector() - k0.vector()) > ball:
            continue
        converged += 1
        spread = max(spread, float(np.max(np.abs(ks.vector() - base))))
    status = "ok" if spread <= agree else "nonunique"
    return PerturbationSample(eta=eta, k=k, status=status, distance=float(np.linalg.norm(base - k0.vector())),
                              residual=trace.residuals[-1], starts_converged=converged, spread=spread)


def lipschitz_experiment(spec: ProblemSpec, z: PrimalDualPoint, delta: float = 1e-3, count: int = 50,
                         opts: NewtonOptions = NewtonOptions(), seed: int = 0, extra_starts: int = 3,
                         jitter: float | None = None, ball: float = 0.1,
                         agree: float = 1e-8) -> LipschitzEstimate:
    """Max pairwise ||k(eta_i) - k(eta_j)|| / ||eta_i - eta_j|| over sampled eta in the delta-ball.

    The unperturbed point is included as the eta = 0 sample.  Extra starts
    are k* jittered uniformly in a ball of radius ``jitter`` (default 10 delta).
    """
    if delta <= 0 or count < 1:
        raise ValueError("delta must be positive and count at least 1")
    k0 = to_kojima(spec, z)
    res0 = float(np.max(np.abs(kojima_eval(spec, k0))))
    if res0 > max(opts.tol, 1e-8):
        raise ValueError(f"unperturbed point is not a solution (residual {res0:.3e})")
    rng = np.random.default_rng(seed)
    N = spec.dims.kojima_size
    jitter = 10.0 * delta if jitter is None else jitter
    samples = []
    for _ in range(count):
        eta = _ball(rng, N, delta)
        starts = [KojimaPoint.from_vector(spec.dims, k0.vector() + _ball(rng, N, jitter))
                  for _ in range(extra_starts)]
        samples.append(solve_perturbed(spec, k0, eta, opts, starts, agree, ball))
    good = [(np.zeros(N), k0.vector())] + [(s.eta, s.k.vector()) for s in samples if s.k is not None]
    best = 0.0
    for i in range(len(good)):
        for j in range(i + 1, len(good)):
            de = np.linalg.norm(good[i][0] - good[j][0])
            if de > 0:
                best = max(best, float(np.linalg.norm(good[i][1] - good[j][1]) / de))
    return LipschitzEstimate(
        value=best, count=count, delta=delta, seed=seed,
        solved=sum(s.k is not None for s in samples),
        failed=sum(s.status == "failed" for s in samples),
        nonunique=sum(s.status == "nonunique" for s in samples),
        samples=samples,
    )


@dataclass
class StabilityCheck:
    coarse: LipschitzEstimate
    fine: LipschitzEstimate
    ratio: float
    passed: bool
    flags: list

    def as_dict(self) -> dict:
        return {"coarse": self.coarse.as_dict(), "fine": self.fine.as_dict(), "ratio": self.ratio,
                "passed": self.passed, "flags": self.flags}


def lipschitz_stability(spec: ProblemSpec, z: PrimalDualPoint, delta: float = 1e-3, count: int = 50,
                        opts: NewtonOptions = NewtonOptions(), seed: int = 0, **kw) -> StabilityCheck:
    """Run the experiment at delta and delta/2 with the same seed; ratio must lie in [0.5, 2]."""
    a = lipschitz_experiment(spec, z, delta, count, opts, seed, **kw)
    b = lipschitz_experiment(spec, z, delta / 2.0, count, opts, seed, **kw)
    ratio = b.value / a.value if a.value > 0 else float("inf")
    flags = []
    for tag, est in (("delta", a), ("delta/2", b)):
        if est.failed:
            flags.append(f"{est.failed} samples failed to solve at {tag}")
        if est.nonunique:
            flags.append(f"{est.nonunique} samples with disagreeing starts at {tag}")
    if not 0.5 <= ratio <= 2.0:
        flags.append(f"estimate ratio {ratio:.3g} outside [0.5, 2]")
    return StabilityCheck(a, b, ratio, not flags, flags)


@dataclass
class InjectivityReport:
    min_ratio: float | None
    evaluated: int
    skipped: int
    radius: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.min_ratio is not None and self.min_ratio > 0.0

    def as_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "evaluated": self.evaluated, "skipped": self.skipped,
                "radius": self.radius, "seed": self.seed, "passed": self.passed}


def homeomorphism_probe(spec: ProblemSpec, z: PrimalDualPoint, radius: float = 1e-2, count: int = 200,
                        seed: int = 0, pairs=None) -> InjectivityReport:
    """Empirical min ||F(k1) - F(k2)|| / ||k1 - k2|| over random pairs near k*.

    ``pairs`` overrides sampling with explicit (k1, k2) vectors; identical
    pairs are skipped.
    """
    k0 = to_kojima(spec, z).vector()
    d = spec.dims
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = [(k0 + _ball(rng, k0.size, radius), k0 + _ball(rng, k0.size, radius)) for _ in range(count)]
    best = float("inf")
    done = skipped = 0
    for a, b in pairs:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        dk = np.linalg.norm(a - b)
        if dk == 0.0:
            skipped += 1
            continue
        Fa = kojima_eval(spec, KojimaPoint.from_vector(d, a))
        Fb = kojima_eval(spec, KojimaPoint.from_vector(d, b))
        best = min(best, float(np.linalg.norm(Fa - Fb) / dk))
        done += 1
    return InjectivityReport(min_ratio=best if done else None, evaluated=done, skipped=skipped,
                             radius=radius, seed=seed)
