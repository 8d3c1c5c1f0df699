"""Grid oracles for the local minimax definition and the quadratic growth bounds.

Desk scale only: n <= 2 and m <= 2.  The x grid and y grid are global
tensor grids over [x* - delta0, x* + delta0]^n and [y* - delta0, y* + delta0]^m;
each level of the delta ladder restricts them to Euclidean balls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .problem import ProblemSpec

__all__ = [
    "OracleError",
    "GridOracleConfig",
    "MinimaxVerdict",
    "GrowthReport",
    "grid_minimax_check",
    "growth_check",
    "brute_lower_max",
]


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GridOracleConfig:
    delta0: float = 0.1
    points: int = 201
    eta_factor: float = 10.0
    feas_tol: float = 1e-9
    levels: int = 4
    slack: float = 1e-9
    fit_residual: float = 0.5

    def __post_init__(self):
        if self.points < 3:
            raise ValueError("grid needs at least 3 points per axis")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")

    def eta(self, delta: float) -> float:
        return min(self.delta0, self.eta_factor * delta)

    def ladder(self) -> list[float]:
        return [self.delta0 / 2**i for i in range(self.levels)]


def _check_dims(spec: ProblemSpec):
    if spec.dims.n > 2 or spec.dims.m > 2:
        raise OracleError(f"grid oracle supports n, m <= 2 (got n={spec.dims.n}, m={spec.dims.m})")


def _tensor_grid(center, half: float, points: int) -> np.ndarray:
    axes = [np.linspace(c - half, c + half, points) for c in center]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _lq_arrays(spec: ProblemSpec):
    """Objective and lower constraints as stacked forms over (x, z)."""
    forms = spec.forms
    f = forms["f"]
    cons = list(forms["h"]) + list(forms["g"])
    kinds = np.array([1] * len(forms["h"]) + [2] * len(forms["g"]), dtype=np.int8)
    d = spec.dims.n + spec.dims.m
    Qc = np.ascontiguousarray(np.array([c.Q for c in cons]).reshape(len(cons), d, d))
    qc = np.ascontiguousarray(np.array([c.q for c in cons]).reshape(len(cons), d))
    rc = np.array([c.r for c in cons], dtype=float)
    return (np.ascontiguousarray(f.Q), np.ascontiguousarray(f.q), float(f.r), Qc, qc, rc, kinds)


def _generic_inner_max(spec, X, Z, ystar, radius, feas_tol):
    out = np.full(len(X), -np.inf)
    idx = np.full(len(X), -1, dtype=np.int64)
    inball = np.flatnonzero(np.sum((Z - ystar) ** 2, axis=1) <= radius * radius * (1.0 + 1e-12))
    for a, x in enumerate(X):
        for b in inball:
            z = Z[b]
            if np.any(np.abs(spec.h(x, z)) > feas_tol) or np.any(spec.g(x, z) > feas_tol):
                continue
            val = spec.f(x, z)
            if val > out[a]:
                out[a], idx[a] = val, b
    return out, idx


def inner_max(spec: ProblemSpec, X, Z, ystar, radius, feas_tol):
    """max f(x, z) over grid z in Y(x) within ``radius`` of y*, per row of X (-inf when empty)."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    ystar = np.ascontiguousarray(ystar, dtype=float)
    if spec.forms is None:
        return _generic_inner_max(spec, X, Z, ystar, radius, feas_tol)
    return kernels.grid_inner_max(X, Z, *_lq_arrays(spec), ystar, float(radius), float(feas_tol))


def _upper_feasible(spec: ProblemSpec, X, tol):
    if spec.dims.n1 == 0 and spec.dims.n2 == 0:
        return np.ones(len(X), dtype=bool)
    ok = np.empty(len(X), dtype=bool)
    for i, x in enumerate(X):
        ok[i] = not (np.any(np.abs(spec.H(x)) > tol) or np.any(spec.G(x) > tol))
    return ok


@dataclass
class MinimaxVerdict:
    passed: bool
    levels: list
    anomalies: list = field(default_factory=list)
    backend: str = kernels.BACKEND

    def as_dict(self) -> dict:
        return {"passed": self.passed, "levels": self.levels, "anomalies": self.anomalies}


def _grids(spec, xstar, ystar, cfg):
    X = _tensor_grid(xstar, cfg.delta0, cfg.points)
    Y = _tensor_grid(ystar, cfg.delta0, cfg.points)
    dx = np.linalg.norm(X - xstar, axis=1)
    dy = np.linalg.norm(Y - ystar, axis=1)
    return X, Y, dx, dy


def grid_minimax_check(spec: ProblemSpec, xstar, ystar, cfg: GridOracleConfig = GridOracleConfig()) -> MinimaxVerdict:
    """Both inequalities of the local minimax definition on every level of the delta ladder."""
    _check_dims(spec)
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    ystar = np.atleast_1d(np.asarray(ystar, dtype=float))
    fstar = spec.f(xstar, ystar)
    X, Y, dx, dy = _grids(spec, xstar, ystar, cfg)
    Xfeas = _upper_feasible(spec, X, cfg.feas_tol)
    anomalies = []
    levels = []
    passed = True
    for delta in cfg.ladder():
        eta = cfg.eta(delta)
        tiny = 1e-12 * cfg.delta0
        lmax, _ = inner_max(spec, xstar[None, :], Y[dy <= delta + tiny], ystar, delta, cfg.feas_tol)
        left = float(lmax[0] - fstar) if np.isfinite(lmax[0]) else None
        sel = (dx <= delta + tiny) & Xfeas
        rvals, _ = inner_max(spec, X[sel], Y, ystar, eta, cfg.feas_tol)
        empty = int(np.sum(~np.isfinite(rvals)))
        finite = rvals[np.isfinite(rvals)]
        right = float(np.min(finite) - fstar) if finite.size else None
        if left is None:
            anomalies.append(f"delta={delta:g}: no feasible grid y at x*")
        if empty:
            anomalies.append(f"delta={delta:g}: {empty} grid x with empty inner set")
        if not sel.any():
            anomalies.append(f"delta={delta:g}: no feasible grid x")
        ok_left = left is None or left <= cfg.slack
        ok_right = right is None or right >= -cfg.slack
        passed &= ok_left and ok_right
        levels.append({"delta": delta, "eta": eta, "left_excess": left, "right_slack": right,
                       "left_ok": ok_left, "right_ok": ok_right, "grid_x": int(sel.sum()),
                       "empty_inner": empty})
    return MinimaxVerdict(passed=bool(passed), levels=levels, anomalies=anomalies)


@dataclass
class GrowthReport:
    gamma1: float
    gamma2: float
    residual1: float
    residual2: float
    min_ratio1: float
    min_ratio2: float
    worst_pointwise1: float
    worst_pointwise2: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _fit(q, y):
    """Least-squares slope through the origin and relative residual."""
    if q.size == 0:
        return float("nan"), float("nan")
    g = float(q @ y / (q @ q))
    ny = np.linalg.norm(y)
    res = float(np.linalg.norm(y - g * q) / ny) if ny > 0 else 0.0
    return g, res


def growth_check(spec: ProblemSpec, xstar, ystar, cfg: GridOracleConfig = GridOracleConfig()) -> GrowthReport:
    """Fit f* - f(x*, y) ~ gamma1 |y - y*|^2 / 2 and sup_z f(x, z) - f* ~ gamma2 |x - x*|^2 / 2 on the delta0 ball."""
    _check_dims(spec)
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    ystar = np.atleast_1d(np.asarray(ystar, dtype=float))
    fstar = spec.f(xstar, ystar)
    X, Y, dx, dy = _grids(spec, xstar, ystar, cfg)
    r = cfg.delta0 * (1.0 + 1e-12)
    ysel = (dy <= r) & (dy > 0)
    Ys = Y[ysel]
    feas = np.array([not (np.any(np.abs(spec.h(xstar, y)) > cfg.feas_tol) or np.any(spec.g(xstar, y) > cfg.feas_tol))
                     for y in Ys], dtype=bool) if len(Ys) else np.zeros(0, dtype=bool)
    Ys, qy = Ys[feas], 0.5 * dy[ysel][feas] ** 2
    deficit = np.array([fstar - spec.f(xstar, y) for y in Ys])
    xsel = (dx <= r) & (dx > 0) & _upper_feasible(spec, X, cfg.feas_tol)
    gains, _ = inner_max(spec, X[xsel], Y, ystar, cfg.delta0, cfg.feas_tol)
    keep = np.isfinite(gains)
    gain = gains[keep] - fstar
    qx = 0.5 * dx[xsel][keep] ** 2
    g1, res1 = _fit(qy, deficit)
    g2, res2 = _fit(qx, gain)
    w1 = float(np.min(deficit)) if deficit.size else float("nan")
    w2 = float(np.min(gain)) if gain.size else float("nan")
    m1 = float(np.min(deficit / qy)) if deficit.size else float("nan")
    m2 = float(np.min(gain / qx)) if gain.size else float("nan")
    passed = (g1 > 0 and g2 > 0 and res1 <= cfg.fit_residual and res2 <= cfg.fit_residual
              and w1 >= -cfg.slack and w2 >= -cfg.slack)
    return GrowthReport(gamma1=g1, gamma2=g2, residual1=res1, residual2=res2, min_ratio1=m1, min_ratio2=m2,
                        worst_pointwise1=w1, worst_pointwise2=w2, passed=bool(passed))


def brute_lower_max(spec: ProblemSpec, x, box, grid: int = 2001):
    """Best feasible point of f(x, .) over a tensor grid of ``box`` = (lo, hi)."""
    if spec.dims.m > 2:
        raise OracleError(f"brute_lower_max supports m <= 2 (got m={spec.dims.m})")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (spec.dims.m,)) for b in box)
    axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
    Y = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    center = 0.5 * (lo + hi)
    vals, idx = inner_max(spec, x[None, :], Y, center, np.inf, 1e-9)
    if idx[0] < 0:
        raise OracleError(f"no feasible grid point in the box at x={x.tolist()}")
    return Y[idx[0]], float(vals[0])
