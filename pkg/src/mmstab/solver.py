"""Semismooth Newton on the Kojima mapping and parametric path tracking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .conditions import check_upper_conditions, lower_solution_at
from .kkt import (
    ActiveSets,
    DegenerateSplitError,
    KojimaPoint,
    Tolerances,
    active_sets,
    block_slices,
    degenerate_indices,
    from_kojima,
    kojima_eval,
    kojima_function_part,
    kojima_jacobian,
    kojima_matrix,
)
from .problem import ParametricProblemSpec, ProblemSpec, freeze_parameter

log = logging.getLogger(__name__)

__all__ = [
    "NewtonOptions",
    "NewtonTrace",
    "NewtonError",
    "SingularJacobianError",
    "MaxIterError",
    "newton_kojima",
    "quadratic_tail_constant",
    "implicit_derivative",
    "PathError",
    "PathResult",
    "track_path",
]

SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    damping: str = "none"
    tol_act: float = 1e-8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.damping not in ("none", "backtracking"):
            raise ValueError(f"unknown damping {self.damping!r}")


@dataclass
class NewtonTrace:
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def as_dict(self) -> dict:
        return {"residuals": list(self.residuals), "step_norms": list(self.steps),
                "iterations": self.iterations, "converged": self.converged}


class NewtonError(RuntimeError):
    def __init__(self, msg, k: KojimaPoint, trace: NewtonTrace):
        super().__init__(msg)
        self.k = k
        self.trace = trace


class SingularJacobianError(NewtonError):
    pass


class MaxIterError(NewtonError):
    pass


def _solve(V, r):
    s = np.linalg.svd(V, compute_uv=False)
    if s[-1] <= SINGULAR_RATIO * s[0]:
        return None, s
    return np.linalg.solve(V, -r), s


def _newton_step(spec, k, r):
    """Newton direction with the directional sign rule on degenerate splits.

    Off the kink the diagonals are the derivatives of the branch the
    iterate is on, however close to zero.  A coordinate exactly on the kink
    first gets weight 1; if the resulting step moves it down, the weight is
    switched to 0 and the step recomputed.  No activity tolerance is used
    here: linearizing a nearby coordinate on the other branch costs the
    quadratic rate.
    """
    sl = block_slices(spec.dims)
    a = (k.w > 0).astype(float)
    c = (k.xi > 0).astype(float)
    dw, dxi = degenerate_indices(k, 0.0)
    a[dw] = 1.0
    c[dxi] = 1.0
    step, s = _solve(kojima_matrix(spec, k, a, c), r)
    if step is None or not (dw.size or dxi.size):
        return step, s
    flip_w = dw[step[sl["w"]][dw] < 0]
    flip_xi = dxi[step[sl["xi"]][dxi] < 0]
    if flip_w.size or flip_xi.size:
        a[flip_w] = 0.0
        c[flip_xi] = 0.0
        step, s = _solve(kojima_matrix(spec, k, a, c), r)
    return step, s


def newton_kojima(spec: ProblemSpec, k0: KojimaPoint, eta=None, opts: NewtonOptions = NewtonOptions()):
    """Solve F(k) = eta; returns (k, trace)."""
    d = spec.dims
    k = k0
    trace = NewtonTrace()
    r = kojima_eval(spec, k, eta)
    res = float(np.max(np.abs(r)))
    trace.residuals.append(res)
    for _ in range(opts.max_iter):
        if not np.isfinite(res):
            raise NewtonError("residual is not finite", k, trace)
        if res <= opts.tol:
            trace.converged = True
            return k, trace
        step, s = _newton_step(spec, k, r)
        if step is None:
            raise SingularJacobianError(
                f"generalized Jacobian is singular (sigma_min {s[-1]:.3e}, sigma_max {s[0]:.3e})", k, trace)
        t = 1.0
        vec = k.vector()
        new = KojimaPoint.from_vector(d, vec + step)
        r_new = kojima_eval(spec, new, eta)
        if opts.damping == "backtracking":
            while np.max(np.abs(r_new)) > (1.0 - 1e-4 * t) * res and t > 1e-4:
                t *= 0.5
                new = KojimaPoint.from_vector(d, vec + t * step)
                r_new = kojima_eval(spec, new, eta)
        k, r = new, r_new
        res = float(np.max(np.abs(r)))
        trace.steps.append(float(t * np.max(np.abs(step))))
        trace.residuals.append(res)
    if res <= opts.tol:
        trace.converged = True
        return k, trace
    raise MaxIterError(f"no convergence in {opts.max_iter} iterations (residual {res:.3e})", k, trace)


def quadratic_tail_constant(residuals, pairs: int = 3) -> float:
    """max r_{k+1} / r_k^2 over the last ``pairs`` consecutive nonzero residual pairs."""
    r = [x for x in residuals if x > 0.0]
    ratios = [r[i + 1] / r[i] ** 2 for i in range(len(r) - 1)]
    if not ratios:
        return 0.0
    return float(max(ratios[-pairs:]))


def implicit_derivative(pspec: ParametricProblemSpec, k: KojimaPoint, theta, tol_act: float = 1e-8) -> np.ndarray:
    """dk/dtheta = -J^{-1} dF/dtheta, one column per parameter."""
    theta = pspec.check_theta(theta)
    spec = freeze_parameter(pspec, theta)
    J = kojima_jacobian(spec, k, tol_act)
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] <= SINGULAR_RATIO * s[0]:
        raise np.linalg.LinAlgError(f"Jacobian is singular (sigma_min {s[-1]:.3e})")
    dF = np.column_stack([kojima_function_part(pspec.dtheta(theta, j), pspec.dims, k) for j in range(pspec.l)])
    return -np.linalg.solve(J, dF)


class PathError(RuntimeError):
    def __init__(self, msg, node: int, reason: str, item=None, partial=None):
        super().__init__(msg)
        self.node = node
        self.reason = reason
        self.item = item
        self.partial = partial


@dataclass
class PathResult:
    thetas: list
    points: list
    derivatives: list
    verdicts: list
    active_sets: list
    reports: list
    mode: str
    traces: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "nodes": [
                {
                    "theta": np.asarray(t).tolist(),
                    "point": p.as_dict(),
                    "derivative": None if dk is None else dk.tolist(),
                    "verdict": v,
                    "active_sets": s.as_dict(),
                    "newton_iterations": tr.iterations if tr is not None else 0,
                }
                for t, p, dk, v, s, tr in zip(self.thetas, self.points, self.derivatives,
                                              self.verdicts, self.active_sets, self.traces)
            ],
        }


def _set_key(s: ActiveSets):
    # the beta+/beta0 split may move in property-A mode; alpha and beta may not
    return tuple(tuple(np.asarray(a).tolist()) for a in (s.alpha, s.beta))


def track_path(pspec: ParametricProblemSpec, theta_grid, k_start: KojimaPoint,
               opts: NewtonOptions = NewtonOptions(), mode: str = "def31",
               tols: Tolerances | None = None) -> PathResult:
    """Predictor-corrector continuation over ``theta_grid`` with per-node certification.

    ``mode`` selects the certificate re-checked at each node: ``def31`` or
    ``property_a``.  In property-A mode a degenerate split makes the
    classical derivative unavailable; the predictor then keeps the previous
    point and the derivative is recorded as None.
    """
    if mode not in ("def31", "property_a"):
        raise ValueError(f"unknown mode {mode!r}")
    tols = tols or Tolerances(act=opts.tol_act)
    grid = [pspec.check_theta(t) for t in theta_grid]
    if not grid:
        raise ValueError("empty parameter grid")
    result = PathResult([], [], [], [], [], [], mode)
    ref_key = None
    k = k_start
    for node, theta in enumerate(grid):
        spec = freeze_parameter(pspec, theta)
        if node > 0:
            dk = result.derivatives[-1]
            pred = k if dk is None else KojimaPoint.from_vector(
                pspec.dims, k.vector() + dk @ (theta - grid[node - 1]))
        else:
            pred = k
        try:
            k, trace = newton_kojima(spec, pred, None, opts)
        except NewtonError as exc:
            raise PathError(f"corrector diverged at node {node} (theta={theta.tolist()}): {exc}",
                            node, "divergence", partial=result) from exc
        z = from_kojima(spec, k)
        report = check_upper_conditions(spec, z, lower_solution_at(spec, z, tols.act), tols)
        ok = report.def31 if mode == "def31" else report.property_a
        if not ok:
            failed = report.def31_failures() if mode == "def31" else report.property_a_failures()
            raise PathError(f"{mode} certificate fails at node {node} (theta={theta.tolist()}): items {failed}",
                            node, "certificate", item=failed, partial=result)
        sets = active_sets(spec, z, tols.act)
        if ref_key is None:
            ref_key = _set_key(sets)
        elif _set_key(sets) != ref_key:
            raise PathError(f"active sets changed at node {node} (theta={theta.tolist()}): "
                            f"{ref_key} -> {_set_key(sets)}", node, "active-set change", partial=result)
        try:
            deriv = implicit_derivative(pspec, k, theta, opts.tol_act)
        except DegenerateSplitError:
            if mode == "def31":
                raise
            deriv = None
        result.thetas.append(theta)
        result.points.append(k)
        result.derivatives.append(deriv)
        result.verdicts.append(ok)
        result.active_sets.append(sets)
        result.reports.append(report)
        result.traces.append(trace)
        log.debug("node %d theta=%s residual=%.3e", node, theta, trace.residuals[-1])
    return result
