"""Derivatives of the optimal value function phi(x) = f(x, y(x)).

    grad phi  = grad_x L(x, y(x), mu(x), lam(x))
    hess phi  = Hxx L - N_a' K_a^{-1} N_a

and the check that the slack-augmented system built on all lower
inequalities produces the same Schur term as the reduced active-set one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kkt import lagrangian_blocks
from .linalg import cond2
from .lower import LowerSolution, _split_jacobians, assemble_K_alpha, assemble_N_alpha
from .problem import ProblemSpec

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
ASYM_LIMIT = 1e-8

__all__ = [
    "SingularBlockError",
    "SensitivityBundle",
    "IdentityReport",
    "value_grad",
    "value_hessian",
    "schur_term",
    "sensitivity_bundle",
    "assemble_full_KN",
    "verify_schur_identity",
]


class SingularBlockError(np.linalg.LinAlgError):
    pass


@dataclass
class SensitivityBundle:
    grad_phi: np.ndarray
    hess_phi: np.ndarray
    K_alpha: np.ndarray
    N_alpha: np.ndarray
    cond_K_alpha: float
    asymmetry: float
    Psi: np.ndarray | None = None

    def as_dict(self) -> dict:
        out = {
            "grad_phi": self.grad_phi.tolist(),
            "hess_phi": self.hess_phi.tolist(),
            "cond_K_alpha": self.cond_K_alpha,
            "asymmetry": self.asymmetry,
            "K_alpha_shape": list(self.K_alpha.shape),
        }
        if self.Psi is not None:
            out["Psi"] = self.Psi.tolist()
        return out


def value_grad(spec: ProblemSpec, x, sol: LowerSolution) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam).grad_x


def schur_term(K: np.ndarray, N: np.ndarray) -> np.ndarray:
    """N' K^{-1} N through a pivoted LU of K."""
    if K.shape[0] == 0:
        return np.zeros((N.shape[1], N.shape[1]))
    c = cond2(K)
    if c > COND_LIMIT:
        raise SingularBlockError(f"block matrix is numerically singular (cond {c:.3e})")
    lu = sla.lu_factor(K)
    return N.T @ sla.lu_solve(lu, N)


def _value_hessian_parts(spec, x, sol):
    K = assemble_K_alpha(spec, x, sol)
    N = assemble_N_alpha(spec, x, sol)
    c = cond2(K)
    if c > COND_LIMIT:
        raise SingularBlockError(
            f"K_alpha is numerically singular (cond {c:.3e}); lower-level Jacobian uniqueness fails")
    S = schur_term(K, N)
    lb = lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam)
    M = lb.hess_xx - S
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > ASYM_LIMIT:
        raise ValueError(f"value-function Hessian asymmetry {asym:.3e} exceeds {ASYM_LIMIT:g}")
    log.debug("value Hessian asymmetry %.3e", asym)
    return 0.5 * (M + M.T), K, N, c, asym


def value_hessian(spec: ProblemSpec, x, sol: LowerSolution) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _value_hessian_parts(spec, x, sol)[0]


def sensitivity_bundle(spec: ProblemSpec, x, sol: LowerSolution) -> SensitivityBundle:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    H, K, N, c, asym = _value_hessian_parts(spec, x, sol)
    return SensitivityBundle(grad_phi=value_grad(spec, x, sol), hess_phi=H, K_alpha=K,
                             N_alpha=N, cond_K_alpha=c, asymmetry=asym)


def assemble_full_KN(spec: ProblemSpec, x, sol: LowerSolution):
    """Slack-augmented K(x), N(x) over all lower inequalities.

    Block order (y, slack, h-multiplier, g-multiplier):

        K = [[Hyy L, 0,             J_y h', J_y g'        ],
             [0,     -2 Diag(lam),  0,      2 Diag(sqrt(-g))],
             [J_y h, 0,             0,      0             ],
             [J_y g, 2 Diag(sqrt(-g)), 0,   0             ]]
        N = [Hyx L; 0; J_x h; J_x g]
    """
    d = spec.dims
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = spec.g(x, sol.y)
    if np.any(g > 1e-12):
        bad = int(np.argmax(g))
        raise ValueError(f"g[{bad + 1}] = {g[bad]:.3e} > 0: square root of a negative slack")
    root = np.sqrt(np.maximum(-g, 0.0))
    Jxh, Jyh, Jxg, Jyg = _split_jacobians(spec, x, sol.y)
    lb = lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam)
    m, m1, m2 = d.m, d.m1, d.m2
    s0, h0, g0 = m, m + m2, m + m2 + m1
    size = m + 2 * m2 + m1
    K = np.zeros((size, size))
    K[:m, :m] = lb.hess_yy
    K[:m, h0:g0] = Jyh.T
    K[:m, g0:] = Jyg.T
    K[s0:h0, s0:h0] = -2.0 * np.diag(sol.lam)
    K[s0:h0, g0:] = 2.0 * np.diag(root)
    K[h0:g0, :m] = Jyh
    K[g0:, :m] = Jyg
    K[g0:, s0:h0] = 2.0 * np.diag(root)
    N = np.vstack([lb.hess_yx, np.zeros((m2, d.n)), Jxh, Jxg])
    return K, N


@dataclass
class IdentityReport:
    error: float
    passed: bool
    tol: float
    full_term: np.ndarray
    reduced_term: np.ndarray

    def as_dict(self) -> dict:
        return {"error": self.error, "passed": self.passed, "tol": self.tol}


def verify_schur_identity(spec: ProblemSpec, x, sol: LowerSolution, tol: float = 1e-8) -> IdentityReport:
    """Relative gap between N'K^{-1}N (full) and N_a'K_a^{-1}N_a (reduced)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    K, N = assemble_full_KN(spec, x, sol)
    full = schur_term(K, N)
    red = schur_term(assemble_K_alpha(spec, x, sol), assemble_N_alpha(spec, x, sol))
    err = float(np.linalg.norm(full - red, np.inf) / (1.0 + np.linalg.norm(red, np.inf)))
    return IdentityReport(error=err, passed=err <= tol, tol=tol, full_term=full, reduced_term=red)
