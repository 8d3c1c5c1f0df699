"""Lower-level problem (P_x): local solve, Jacobian uniqueness, implicit map.

For fixed x the lower level maximizes f(x, .) over Y(x).  Its KKT system
is solved in the split form ``grad_y L(x, y, mu, xi^+) = 0, h = 0,
-g + xi^- = 0`` with lam = xi^+, i.e. the last three blocks of the Kojima
mapping with x frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .kkt import Tolerances, lagrangian_blocks
from .linalg import kernel_basis, reduced_eigs, rows_independent
from .problem import ProblemSpec

log = logging.getLogger(__name__)

__all__ = [
    "LowerOptions",
    "LowerSolution",
    "LowerJUReport",
    "LowerSolveError",
    "ActiveSetChangeError",
    "solve_lower",
    "check_lower_ju",
    "assemble_K_alpha",
    "assemble_N_alpha",
    "track_lower_map",
]


class LowerSolveError(RuntimeError):
    def __init__(self, msg, y=None, trace=None):
        super().__init__(msg)
        self.y = y
        self.trace = trace or []


class ActiveSetChangeError(RuntimeError):
    def __init__(self, msg, position: int, index: int):
        super().__init__(msg)
        self.position = position
        self.index = index


@dataclass(frozen=True)
class LowerOptions:
    tol: float = 1e-10
    max_iter: int = 50
    tol_act: float = 1e-8


@dataclass
class LowerSolution:
    x: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    residual: float
    alpha: np.ndarray
    alpha_c: np.ndarray
    margins: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)


def _split_jacobians(spec: ProblemSpec, x, y):
    d = spec.dims
    z = np.concatenate([x, y])
    b = spec.bundle
    Jh = np.asarray(b.h_jac(z), dtype=float).reshape(d.m1, d.n + d.m)
    Jg = np.asarray(b.g_jac(z), dtype=float).reshape(d.m2, d.n + d.m)
    return Jh[:, : d.n], Jh[:, d.n:], Jg[:, : d.n], Jg[:, d.n:]


def _lower_system(spec: ProblemSpec, x, y, mu, xi):
    lam = np.maximum(xi, 0.0)
    lb = lagrangian_blocks(spec, x, y, mu, lam)
    R = np.concatenate([lb.grad_y, spec.h(x, y), -spec.g(x, y) + np.minimum(xi, 0.0)])
    return R, lb


def _lower_matrix(spec, x, y, mu, xi, lb):
    d = spec.dims
    _, Jyh, _, Jyg = _split_jacobians(spec, x, y)
    c = (xi >= 0.0).astype(float)  # kink ties take the active branch
    size = d.m + d.m1 + d.m2
    M = np.zeros((size, size))
    Y = slice(0, d.m)
    MU = slice(d.m, d.m + d.m1)
    XI = slice(d.m + d.m1, size)
    M[Y, Y] = lb.hess_yy
    M[Y, MU] = Jyh.T
    M[Y, XI] = -Jyg.T * c
    M[MU, Y] = Jyh
    M[XI, Y] = -Jyg
    M[XI, XI] = np.diag(1.0 - c)
    return M


def _classify(spec, x, sol_y, lam, tol_act):
    g = spec.g(x, sol_y)
    mask = g >= -tol_act
    idx = np.arange(spec.dims.m2)
    margins = {"g": g.tolist(), "lam": lam.tolist(), "alpha_decision": np.abs(g + tol_act).tolist()}
    return idx[mask], idx[~mask], margins


def solve_lower(spec: ProblemSpec, x, y_init, opts: LowerOptions = LowerOptions(),
                mu_init=None, lam_init=None) -> LowerSolution:
    """Semismooth Newton on the lower-level split KKT system from ``y_init``."""
    d = spec.dims
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y_init, dtype=float)).copy()
    if x.shape != (d.n,) or y.shape != (d.m,):
        raise ValueError("x or y_init has the wrong length")
    mu = np.zeros(d.m1) if mu_init is None else np.asarray(mu_init, dtype=float).copy()
    lam0 = np.zeros(d.m2) if lam_init is None else np.asarray(lam_init, dtype=float)
    xi = lam0 + spec.g(x, y)
    trace = []
    for it in range(opts.max_iter + 1):
        R, lb = _lower_system(spec, x, y, mu, xi)
        r = float(np.max(np.abs(R))) if R.size else 0.0
        trace.append(r)
        if not np.isfinite(r):
            raise LowerSolveError(f"non-finite residual at x={x.tolist()}", y=y, trace=trace)
        if r <= opts.tol:
            lam = np.maximum(xi, 0.0)
            alpha, alpha_c, margins = _classify(spec, x, y, lam, opts.tol_act)
            return LowerSolution(x=x, y=y, mu=mu, lam=lam, xi=xi, residual=r,
                                 alpha=alpha, alpha_c=alpha_c, margins=margins, trace=trace)
        if it == opts.max_iter:
            break
        M = _lower_matrix(spec, x, y, mu, xi, lb)
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= 1e-14 * max(s[0], 1.0):
            raise LowerSolveError(f"singular lower Newton matrix at x={x.tolist()}", y=y, trace=trace)
        step = np.linalg.solve(M, -R)
        y = y + step[: d.m]
        mu = mu + step[d.m: d.m + d.m1]
        xi = xi + step[d.m + d.m1:]
    raise LowerSolveError(
        f"lower solve did not reach tol {opts.tol:g} in {opts.max_iter} iterations "
        f"(residual {trace[-1]:.3e}) at x={x.tolist()}", y=y, trace=trace)


@dataclass
class LowerJUReport:
    kkt_residual: float
    kkt_ok: bool
    licq_sigma_min: float
    licq_ok: bool
    sc_margin: float
    sc_ok: bool
    sosc_max_eig: float
    sosc_ok: bool
    cone_dim: int
    alpha: list
    tolerances: dict

    @property
    def passed(self) -> bool:
        return self.kkt_ok and self.licq_ok and self.sc_ok and self.sosc_ok

    def failed_items(self) -> list[str]:
        names = {"a": self.kkt_ok, "b": self.licq_ok, "c": self.sc_ok, "d": self.sosc_ok}
        return [k for k, ok in names.items() if not ok]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "a_kkt_residual": self.kkt_residual, "a_ok": self.kkt_ok,
            "b_licq_sigma_min": self.licq_sigma_min, "b_ok": self.licq_ok,
            "c_sc_margin": self.sc_margin, "c_ok": self.sc_ok,
            "d_sosc_max_eig": self.sosc_max_eig, "d_ok": self.sosc_ok,
            "cone_dim": self.cone_dim, "alpha": self.alpha, "tolerances": self.tolerances,
        }


def lower_kkt_residual(spec: ProblemSpec, x, y, mu, lam) -> float:
    lb = lagrangian_blocks(spec, x, y, mu, lam)
    r = np.concatenate([lb.grad_y, spec.h(x, y), np.minimum(lam, -spec.g(x, y))])
    return float(np.max(np.abs(r))) if r.size else 0.0


def lower_constraint_rows(spec: ProblemSpec, x, y, alpha) -> np.ndarray:
    """[J_y h; J_y g_alpha]."""
    _, Jyh, _, Jyg = _split_jacobians(spec, x, y)
    return np.vstack([Jyh, Jyg[np.asarray(alpha, dtype=int)]]).reshape(-1, spec.dims.m)


def check_lower_ju(spec: ProblemSpec, x, sol: LowerSolution, tols: Tolerances = Tolerances()) -> LowerJUReport:
    """Items (a)-(d) of lower-level Jacobian uniqueness at (y, mu, lam)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    res = lower_kkt_residual(spec, x, sol.y, sol.mu, sol.lam)
    A = lower_constraint_rows(spec, x, sol.y, sol.alpha)
    licq_ok, smin = rows_independent(A, tols.rank)
    g = spec.g(x, sol.y)
    sc = float(np.min(sol.lam - g)) if g.size else float("inf")
    lb = lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam)
    Z = kernel_basis(A, spec.dims.m)
    eigs = reduced_eigs(lb.hess_yy, Z)
    max_eig = float(eigs[-1]) if eigs.size else float("-inf")
    return LowerJUReport(
        kkt_residual=res, kkt_ok=res <= tols.kkt,
        licq_sigma_min=smin, licq_ok=licq_ok,
        sc_margin=sc, sc_ok=sc > tols.sc,
        sosc_max_eig=max_eig, sosc_ok=max_eig < -tols.sosc,
        cone_dim=int(Z.shape[1]), alpha=sol.alpha.tolist(), tolerances=tols.as_dict(),
    )


def assemble_K_alpha(spec: ProblemSpec, x, sol: LowerSolution) -> np.ndarray:
    """[[Hyy L, J_y h', -J_y g_a'], [J_y h, 0, 0], [-J_y g_a, 0, 0]]."""
    d = spec.dims
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _, Jyh, _, Jyg = _split_jacobians(spec, x, sol.y)
    Jyga = Jyg[sol.alpha]
    lb = lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam)
    s = d.m + d.m1 + len(sol.alpha)
    K = np.zeros((s, s))
    a = d.m + d.m1
    K[: d.m, : d.m] = lb.hess_yy
    K[: d.m, d.m: a] = Jyh.T
    K[: d.m, a:] = -Jyga.T
    K[d.m: a, : d.m] = Jyh
    K[a:, : d.m] = -Jyga
    return K


def assemble_N_alpha(spec: ProblemSpec, x, sol: LowerSolution) -> np.ndarray:
    """[Hyx L; J_x h; -J_x g_a] -- x-derivative of the equations behind K_alpha."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Jxh, _, Jxg, _ = _split_jacobians(spec, x, sol.y)
    lb = lagrangian_blocks(spec, x, sol.y, sol.mu, sol.lam)
    return np.vstack([lb.hess_yx, Jxh, -Jxg[sol.alpha]])


def _check_fixed_alpha(spec, sol: LowerSolution, ref_alpha, position: int, tol_act: float):
    if not np.array_equal(sol.alpha, ref_alpha):
        diff = sorted(set(sol.alpha.tolist()) ^ set(np.asarray(ref_alpha).tolist()))
        raise ActiveSetChangeError(
            f"lower active set changed at path position {position}: index {diff[0] + 1} "
            f"(alpha {np.asarray(ref_alpha).tolist()} -> {sol.alpha.tolist()})",
            position=position, index=diff[0])
    weak = [i for i in ref_alpha if sol.lam[i] <= tol_act]
    if weak:
        raise ActiveSetChangeError(
            f"multiplier of active index {weak[0] + 1} vanished at path position {position}",
            position=position, index=int(weak[0]))


def track_lower_map(spec: ProblemSpec, x_path, start: LowerSolution,
                    opts: LowerOptions = LowerOptions(), max_halvings: int = 8) -> list[LowerSolution]:
    """Warm-started lower solves along ``x_path`` with a fixed active set.

    A failed solve between consecutive path points is retried through
    bisected intermediate points, up to ``max_halvings`` levels.
    """
    ref_alpha = start.alpha.copy()
    prev = start
    out = []
    for pos, xt in enumerate(x_path):
        xt = np.atleast_1d(np.asarray(xt, dtype=float))
        sol = _solve_towards(spec, prev, xt, opts, max_halvings)
        _check_fixed_alpha(spec, sol, ref_alpha, pos, opts.tol_act)
        out.append(sol)
        prev = sol
    return out


def _solve_towards(spec, prev: LowerSolution, target, opts, depth):
    try:
        return solve_lower(spec, target, prev.y, opts, mu_init=prev.mu, lam_init=prev.lam)
    except LowerSolveError:
        if depth <= 0:
            raise
    log.debug("lower solve failed towards %s, bisecting", target.tolist())
    mid = 0.5 * (prev.x + target)
    half = _solve_towards(spec, prev, mid, opts, depth - 1)
    return _solve_towards(spec, half, target, opts, depth - 1)
