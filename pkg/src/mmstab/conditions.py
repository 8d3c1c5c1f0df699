"""Upper-level certificates: critical-cone bases, second-order conditions,
full Jacobian uniqueness and Property A.

Both certificates require upper-level LICQ, so the upper multiplier set is
the singleton {(u, v)} and every sup over multipliers is an evaluation.
Property A reuses the item labels (i), (ii), (iv), (v) of the full
conditions and drops (iii), upper strict complementarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kkt import (
    ActiveSets,
    PrimalDualPoint,
    Tolerances,
    active_sets,
    kkt_residual,
    lagrangian_blocks,
    upper_hessian_terms,
)
from .linalg import cone_min_quadratic, gram_schmidt_kernel, kernel_basis, reduced_eigs, rows_independent
from .lower import (
    LowerJUReport,
    LowerSolution,
    assemble_K_alpha,
    assemble_N_alpha,
    check_lower_ju,
    lower_kkt_residual,
)
from .problem import ProblemSpec
from .sensitivity import schur_term

__all__ = [
    "ConeBasis",
    "UpperConditionReport",
    "lower_solution_at",
    "reduced_upper_hessian",
    "cone_basis",
    "check_upper_conditions",
]

CRITICAL = "critical-cone-strict-comp"
AFFINE = "affine-hull"


def lower_solution_at(spec: ProblemSpec, z: PrimalDualPoint, tol_act: float = 1e-8) -> LowerSolution:
    """Wrap the lower-level part of a primal-dual point without re-solving."""
    g = spec.g(z.x, z.y)
    mask = g >= -tol_act
    idx = np.arange(spec.dims.m2)
    return LowerSolution(
        x=z.x.copy(), y=z.y.copy(), mu=z.mu.copy(), lam=z.lam.copy(), xi=z.lam + g,
        residual=lower_kkt_residual(spec, z.x, z.y, z.mu, z.lam), alpha=idx[mask], alpha_c=idx[~mask],
        margins={"g": g.tolist(), "lam": z.lam.tolist(), "alpha_decision": np.abs(g + tol_act).tolist()},
    )


def reduced_upper_hessian(spec: ProblemSpec, z: PrimalDualPoint, sol: LowerSolution | None = None) -> np.ndarray:
    """Psi = Hxx L + sum u_j Hess H_j + sum v_i Hess G_i - N_a' K_a^{-1} N_a."""
    if sol is None:
        sol = lower_solution_at(spec, z)
    lb = lagrangian_blocks(spec, z.x, sol.y, sol.mu, sol.lam)
    G11 = lb.hess_xx + upper_hessian_terms(spec, z.x, z.u, z.v)
    S = schur_term(assemble_K_alpha(spec, z.x, sol), assemble_N_alpha(spec, z.x, sol))
    Psi = G11 - S
    return 0.5 * (Psi + Psi.T)


@dataclass
class ConeBasis:
    Z: np.ndarray
    which: str
    rows: np.ndarray

    @property
    def dim(self) -> int:
        return self.Z.shape[1]


def upper_rows(spec: ProblemSpec, x, idx) -> np.ndarray:
    """[JH(x); JG_idx(x)]."""
    d = spec.dims
    JH = np.asarray(spec.bundle.H_jac(x), dtype=float).reshape(d.n1, d.n)
    JG = np.asarray(spec.bundle.G_jac(x), dtype=float).reshape(d.n2, d.n)
    return np.vstack([JH, JG[np.asarray(idx, dtype=int)]])


def cone_basis(spec: ProblemSpec, z: PrimalDualPoint, which: str = CRITICAL,
               tol_act: float = 1e-8, sets: ActiveSets | None = None,
               completion: np.ndarray | None = None) -> ConeBasis:
    """Orthonormal basis of ker[JH; JG_beta] (critical) or ker[JH; JG_beta+] (affine hull).

    With ``completion`` given, the basis is produced by Gram-Schmidt on
    [rows; completion] in fixed column order, which keeps it continuous
    along a parameter path; otherwise an SVD null-space basis is used.
    """
    if sets is None:
        sets = active_sets(spec, z, tol_act)
    if which == CRITICAL:
        rows = upper_rows(spec, z.x, sets.beta)
    elif which == AFFINE:
        rows = upper_rows(spec, z.x, sets.beta_plus)
    else:
        raise ValueError(f"unknown cone selector {which!r}")
    n = spec.dims.n
    if completion is not None:
        Z = gram_schmidt_kernel(rows, completion)
    else:
        Z = kernel_basis(rows, n)
    return ConeBasis(Z=Z, which=which, rows=rows)


@dataclass
class UpperConditionReport:
    kkt_residual: float
    kkt_ok: bool
    licq_sigma_min: float
    licq_ok: bool
    sc_margin: float
    sc_ok: bool
    lower: LowerJUReport
    # None when the lower block is not certified and Psi is undefined
    sosc_min_eig: float | None
    sosc_ok: bool
    strong_sosc_min_eig: float | None
    strong_sosc_ok: bool
    necessary_min_eig: float | None
    necessary_ok: bool
    cone_dim: int
    affine_dim: int
    sets: ActiveSets
    Psi: np.ndarray | None
    tolerances: dict = field(default_factory=dict)

    @property
    def def31(self) -> bool:
        return self.kkt_ok and self.licq_ok and self.sc_ok and self.lower.passed and self.sosc_ok

    @property
    def property_a(self) -> bool:
        return self.kkt_ok and self.licq_ok and self.lower.passed and self.strong_sosc_ok

    def def31_failures(self) -> list[str]:
        items = {"i": self.kkt_ok, "ii": self.licq_ok, "iii": self.sc_ok,
                 "iv": self.lower.passed, "v": self.sosc_ok}
        return [k for k, ok in items.items() if not ok]

    def property_a_failures(self) -> list[str]:
        items = {"i": self.kkt_ok, "ii": self.licq_ok, "iv": self.lower.passed, "v": self.strong_sosc_ok}
        return [k for k, ok in items.items() if not ok]

    def as_dict(self) -> dict:
        return {
            "def31": self.def31,
            "def31_failures": self.def31_failures(),
            "property_a": self.property_a,
            "property_a_failures": self.property_a_failures(),
            "i_kkt_residual": self.kkt_residual,
            "ii_licq_sigma_min": self.licq_sigma_min,
            "iii_sc_margin": self.sc_margin,
            "iv_lower": self.lower.as_dict(),
            "v_sosc_min_eig": self.sosc_min_eig,
            "v_strong_sosc_min_eig": self.strong_sosc_min_eig,
            "necessary_min_eig": self.necessary_min_eig,
            "necessary_ok": self.necessary_ok,
            "critical_cone_dim": self.cone_dim,
            "affine_hull_dim": self.affine_dim,
            "active_sets": self.sets.as_dict(),
            "Psi": None if self.Psi is None else self.Psi.tolist(),
            "tolerances": self.tolerances,
        }


def _min_eig(M, Z) -> float:
    e = reduced_eigs(M, Z)
    return float(e[0]) if e.size else float("inf")


def check_upper_conditions(spec: ProblemSpec, z: PrimalDualPoint, sol: LowerSolution | None = None,
                           tols: Tolerances = Tolerances()) -> UpperConditionReport:
    """Items of the full conditions (def31) and of Property A at ``z``.

    Item (v) of the full conditions is evaluated on the critical cone itself.  Under strict
    complementarity that cone is the subspace ker[JH; JG_beta]; otherwise
    the minimum of d'Psi d over its unit sphere is found by face enumeration.
    """
    if sol is None:
        sol = lower_solution_at(spec, z, tols.act)
    sets = active_sets(spec, z, tols.act)
    _, res = kkt_residual(spec, z)
    licq_ok, smin = rows_independent(upper_rows(spec, z.x, sets.beta), tols.rank)
    Gx = spec.G(z.x)
    b = sets.beta
    sc = float(np.min(z.v[b] - Gx[b])) if b.size else float("inf")
    lower = check_lower_ju(spec, z.x, sol, tols)
    crit = cone_basis(spec, z, CRITICAL, sets=sets)
    aff = cone_basis(spec, z, AFFINE, sets=sets)
    if lower.licq_ok and lower.sc_ok:
        Psi = reduced_upper_hessian(spec, z, sol)
        ev_aff = _min_eig(Psi, aff.Z)
        # with beta0 nonempty the critical cone is polyhedral, {d in Aff C : JG_beta0 d <= 0}
        J0 = upper_rows(spec, z.x, sets.beta_zero)[spec.dims.n1:]
        ev_crit = cone_min_quadratic(Psi, aff.Z, J0)
    else:
        # K_alpha may be singular; the verdict already fails at (iv)
        Psi = ev_aff = ev_crit = None
    return UpperConditionReport(
        kkt_residual=res, kkt_ok=res <= tols.kkt,
        licq_sigma_min=smin, licq_ok=licq_ok,
        sc_margin=sc, sc_ok=sc > tols.sc,
        lower=lower,
        sosc_min_eig=ev_crit, sosc_ok=ev_crit is not None and ev_crit > tols.sosc,
        strong_sosc_min_eig=ev_aff, strong_sosc_ok=ev_aff is not None and ev_aff > tols.sosc,
        necessary_min_eig=ev_crit, necessary_ok=ev_crit is not None and ev_crit >= -tols.sosc,
        cone_dim=crit.dim, affine_dim=aff.dim, sets=sets, Psi=Psi,
        tolerances=tols.as_dict(),
    )
