"""Central finite differences, used as an independent derivative oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lower import LowerOptions, LowerSolution, LowerSolveError, solve_lower
from .problem import ProblemSpec

log = logging.getLogger(__name__)

__all__ = [
    "FDConfig",
    "DerivativeReport",
    "ValueProbeError",
    "fd_gradient",
    "fd_hessian",
    "check_derivatives",
    "fd_value_hessian",
]


@dataclass(frozen=True)
class FDConfig:
    step: float = 1e-5
    # second differences divide by step**2; 1e-4 keeps roundoff near 1e-8
    hess_step: float = 1e-4
    scheme: str = "central"

    def __post_init__(self):
        if not (self.step > 0 and self.hess_step > 0):
            raise ValueError("finite-difference steps must be positive")
        if self.scheme != "central":
            raise ValueError("only the central scheme is supported")


def fd_gradient(fn: Callable[[np.ndarray], float], point, cfg: FDConfig = FDConfig()) -> np.ndarray:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    h = cfg.step
    out = np.empty(p.size)
    for i in range(p.size):
        e = np.zeros(p.size)
        e[i] = h
        out[i] = (fn(p + e) - fn(p - e)) / (2.0 * h)
    return out


def fd_hessian(fn: Callable[[np.ndarray], float], point, cfg: FDConfig = FDConfig()) -> np.ndarray:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    h = cfg.hess_step
    n = p.size
    f0 = fn(p)
    M = np.empty((n, n))
    E = np.eye(n) * h
    for i in range(n):
        M[i, i] = (fn(p + E[i]) - 2.0 * f0 + fn(p - E[i])) / h**2
        for j in range(i + 1, n):
            val = (fn(p + E[i] + E[j]) - fn(p + E[i] - E[j])
                   - fn(p - E[i] + E[j]) + fn(p - E[i] - E[j])) / (4.0 * h**2)
            M[i, j] = M[j, i] = val
    return 0.5 * (M + M.T)


@dataclass
class DerivativeReport:
    passed: bool
    tol: float
    grad_error: dict = field(default_factory=dict)
    hess_error: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def failures(self) -> list[str]:
        out = []
        for kind, errs in (("grad", self.grad_error), ("hess", self.hess_error)):
            for name, err in errs.items():
                if err > self.tol:
                    out.append(f"{kind}:{name}")
        return out

    def as_dict(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "grad_error": self.grad_error,
                "hess_error": self.hess_error, "worst": self.worst, "warnings": self.warnings}


def _scalar_functions(spec: ProblemSpec):
    """(name, value, grad, hess, upper) for f and every constraint component."""
    d = spec.dims
    b = spec.bundle
    yield "f", b.f, b.f_grad, b.f_hess, False
    for key, count, upper in (("h", d.m1, False), ("g", d.m2, False), ("H", d.n1, True), ("G", d.n2, True)):
        val, jac, hess = (getattr(b, key), getattr(b, key + "_jac"), getattr(b, key + "_hess"))
        for i in range(count):
            yield (f"{key}[{i}]",
                   lambda z, i=i, val=val: float(np.asarray(val(z))[i]),
                   lambda z, i=i, jac=jac: np.asarray(jac(z))[i],
                   lambda z, i=i, hess=hess: np.asarray(hess(z))[i],
                   upper)


def check_derivatives(spec: ProblemSpec, probes: Sequence, tol: float = 1e-6,
                      cfg: FDConfig = FDConfig()) -> DerivativeReport:
    """Max |analytic - FD| per function over the probes (points in R^{n+m})."""
    report = DerivativeReport(passed=True, tol=tol)
    if len(probes) == 0:
        report.warnings.append("empty probe list: vacuous pass")
        log.warning("check_derivatives called with no probes")
        return report
    n = spec.dims.n
    for name, val, grad, hess, upper in _scalar_functions(spec):
        gerr = herr = 0.0
        worst = None
        for pi, probe in enumerate(probes):
            z = np.asarray(probe, dtype=float)
            pt = z[:n] if upper else z
            dg = np.abs(np.asarray(grad(pt), dtype=float) - fd_gradient(val, pt, cfg))
            dh = np.abs(np.asarray(hess(pt), dtype=float) - fd_hessian(val, pt, cfg))
            if dg.max() > gerr:
                gerr = float(dg.max())
                worst = {"probe": pi, "kind": "grad", "component": int(np.argmax(dg))}
            if dh.max() > herr:
                herr = float(dh.max())
                if herr > gerr:
                    flat = int(np.argmax(dh))
                    worst = {"probe": pi, "kind": "hess", "component": list(np.unravel_index(flat, dh.shape))}
        report.grad_error[name] = gerr
        report.hess_error[name] = herr
        if worst is not None:
            worst["component"] = np.asarray(worst["component"]).tolist()
            report.worst[name] = worst
        if gerr > tol or herr > tol:
            report.passed = False
    return report


class ValueProbeError(RuntimeError):
    def __init__(self, msg, probe):
        super().__init__(msg)
        self.probe = probe


def fd_value_hessian(spec: ProblemSpec, x, center: LowerSolution, cfg: FDConfig = FDConfig(),
                     lower_solver: Callable | None = None) -> np.ndarray:
    """Second differences of phi(x') = f(x', y(x')) with warm-started lower solves.

    ``lower_solver(x', center)`` must return a LowerSolution; the default is
    a tight-tolerance :func:`solve_lower` started from ``center``.  A probe
    whose active set differs from the center's aborts the oracle.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if lower_solver is None:
        opts = LowerOptions(tol=1e-13, max_iter=50)

        def lower_solver(xp, c):
            return solve_lower(spec, xp, c.y, opts, mu_init=c.mu, lam_init=c.lam)

    def phi(xp):
        try:
            sol = lower_solver(xp, center)
        except LowerSolveError as exc:
            raise ValueProbeError(f"lower solve failed at probe x={xp.tolist()}: {exc}", xp) from exc
        if not np.array_equal(sol.alpha, center.alpha):
            raise ValueProbeError(
                f"active set changed at probe x={xp.tolist()}: {center.alpha.tolist()} -> {sol.alpha.tolist()}",
                xp)
        return spec.f(xp, sol.y)

    return fd_hessian(phi, x, cfg)

