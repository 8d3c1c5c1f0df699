"""Lagrangian blocks, KKT residuals, active sets and the Kojima mapping.

Variable order inside every assembled vector/matrix is the natural one,
``(x, u, w, y, mu, xi)`` for Kojima points and ``(x, u, v, y, mu, lam)``
for primal-dual points, constraint indices in declaration order.  The
block layout with indices grouped as (beta+, beta0, beta^c) and
(alpha, alpha^c) is obtained through :func:`grouped_order`, a symmetric
permutation that leaves determinants and singular values unchanged.

Index numbers in error messages are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import Dimensions, ProblemSpec

__all__ = [
    "Tolerances",
    "PrimalDualPoint",
    "KojimaPoint",
    "ActiveSets",
    "LagrangianBlocks",
    "DegenerateSplitError",
    "lagrangian_blocks",
    "kkt_residual",
    "to_kojima",
    "from_kojima",
    "active_sets",
    "kojima_eval",
    "kojima_function_part",
    "kojima_matrix",
    "kojima_jacobian",
    "kojima_b_subdiff_element",
    "degenerate_indices",
    "grouped_order",
]


@dataclass(frozen=True)
class Tolerances:
    act: float = 1e-8
    kkt: float = 1e-8
    rank: float = 1e-8
    sc: float = 1e-8
    sosc: float = 1e-8

    def as_dict(self) -> dict:
        return {"act": self.act, "kkt": self.kkt, "rank": self.rank, "sc": self.sc, "sosc": self.sosc}


def _vec(a, size: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(a, dtype=float)).reshape(-1)
    if arr.shape != (size,):
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {size}")
    return arr


@dataclass(frozen=True)
class PrimalDualPoint:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    @classmethod
    def make(cls, dims: Dimensions, x, y, u=None, v=None, mu=None, lam=None) -> "PrimalDualPoint":
        z = lambda a, k: np.zeros(k) if a is None else a  # noqa: E731
        return cls(
            x=_vec(x, dims.n, "x"), u=_vec(z(u, dims.n1), dims.n1, "u"),
            v=_vec(z(v, dims.n2), dims.n2, "v"), y=_vec(y, dims.m, "y"),
            mu=_vec(z(mu, dims.m1), dims.m1, "mu"), lam=_vec(z(lam, dims.m2), dims.m2, "lam"),
        )

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, self.v, self.y, self.mu, self.lam])

    @classmethod
    def from_vector(cls, dims: Dimensions, vec) -> "PrimalDualPoint":
        parts = np.split(np.asarray(vec, dtype=float), _offsets(dims))
        return cls(*parts)

    def as_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x", "u", "v", "y", "mu", "lam")}


@dataclass(frozen=True)
class KojimaPoint:
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    xi: np.ndarray

    @property
    def w_plus(self) -> np.ndarray:
        return np.maximum(self.w, 0.0)

    @property
    def w_minus(self) -> np.ndarray:
        return np.minimum(self.w, 0.0)

    @property
    def xi_plus(self) -> np.ndarray:
        return np.maximum(self.xi, 0.0)

    @property
    def xi_minus(self) -> np.ndarray:
        return np.minimum(self.xi, 0.0)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, self.w, self.y, self.mu, self.xi])

    @classmethod
    def from_vector(cls, dims: Dimensions, vec) -> "KojimaPoint":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dims.kojima_size,):
            raise ValueError(f"Kojima vector has shape {vec.shape}, expected ({dims.kojima_size},)")
        return cls(*np.split(vec, _offsets(dims)))

    def as_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x", "u", "w", "y", "mu", "xi")}


def _offsets(d: Dimensions) -> list[int]:
    sizes = [d.n, d.n1, d.n2, d.m, d.m1]
    return list(np.cumsum(sizes))


def block_slices(d: Dimensions) -> dict[str, slice]:
    """Slices of the six blocks of a Kojima (or primal-dual) vector."""
    names = ("x", "u", "w", "y", "mu", "xi")
    sizes = (d.n, d.n1, d.n2, d.m, d.m1, d.m2)
    out, start = {}, 0
    for nm, sz in zip(names, sizes):
        out[nm] = slice(start, start + sz)
        start += sz
    return out


@dataclass
class ActiveSets:
    alpha: np.ndarray
    alpha_c: np.ndarray
    beta: np.ndarray
    beta_plus: np.ndarray
    beta_zero: np.ndarray
    beta_c: np.ndarray
    margins: dict = field(default_factory=dict)

    def key(self) -> tuple:
        return (tuple(self.alpha.tolist()), tuple(self.beta_plus.tolist()),
                tuple(self.beta_zero.tolist()))

    def as_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in ("alpha", "alpha_c", "beta", "beta_plus", "beta_zero", "beta_c")}
        out["margins"] = self.margins
        return out


@dataclass
class LagrangianBlocks:
    value: float
    grad_x: np.ndarray
    grad_y: np.ndarray
    hess_xx: np.ndarray
    hess_xy: np.ndarray  # n x m
    hess_yy: np.ndarray

    @property
    def hess_yx(self) -> np.ndarray:
        return self.hess_xy.T


class DegenerateSplitError(ValueError):
    """A split coordinate of w or xi sits on the kink of max(0, .)."""

    def __init__(self, block: str, indices):
        self.block = block
        self.indices = list(indices)
        names = ", ".join(str(i + 1) for i in self.indices)
        super().__init__(
            f"degenerate index {names} in {block}: the mapping is not differentiable here; "
            "use kojima_b_subdiff_element"
        )


# --- Lagrangian ------------------------------------------------------------


def _lower_parts(spec: ProblemSpec, x, y):
    d = spec.dims
    x = _vec(x, d.n, "x")
    y = _vec(y, d.m, "y")
    z = np.concatenate([x, y])
    b = spec.bundle
    return z, b


def lagrangian_blocks(spec: ProblemSpec, x, y, mu=None, lam=None) -> LagrangianBlocks:
    """L = f + mu'h - lam'g and its x/y derivative blocks."""
    d = spec.dims
    mu = _vec(np.zeros(d.m1) if mu is None else mu, d.m1, "mu")
    lam = _vec(np.zeros(d.m2) if lam is None else lam, d.m2, "lam")
    z, b = _lower_parts(spec, x, y)
    val = float(b.f(z)) + float(mu @ b.h(z)) - float(lam @ b.g(z))
    grad = np.asarray(b.f_grad(z), dtype=float) + b.h_jac(z).T @ mu - b.g_jac(z).T @ lam
    hess = (
        np.asarray(b.f_hess(z), dtype=float)
        + np.einsum("k,kij->ij", mu, b.h_hess(z))
        - np.einsum("k,kij->ij", lam, b.g_hess(z))
    )
    n = d.n
    return LagrangianBlocks(
        value=val,
        grad_x=grad[:n],
        grad_y=grad[n:],
        hess_xx=hess[:n, :n],
        hess_xy=hess[:n, n:],
        hess_yy=hess[n:, n:],
    )


def upper_hessian_terms(spec: ProblemSpec, x, u, v) -> np.ndarray:
    """sum_j u_j Hess H_j(x) + sum_i v_i Hess G_i(x)."""
    b = spec.bundle
    return np.einsum("k,kij->ij", u, b.H_hess(x)) + np.einsum("k,kij->ij", v, b.G_hess(x))


def kkt_residual(spec: ProblemSpec, z: PrimalDualPoint):
    """Natural residual of the coupled KKT system and its infinity norm."""
    b = spec.bundle
    lb = lagrangian_blocks(spec, z.x, z.y, z.mu, z.lam)
    JH = b.H_jac(z.x)
    JG = b.G_jac(z.x)
    Gx = np.asarray(b.G(z.x), dtype=float)
    gz = spec.g(z.x, z.y)
    r = np.concatenate([
        lb.grad_x + JH.T @ z.u + JG.T @ z.v,
        np.asarray(b.H(z.x), dtype=float),
        np.minimum(z.v, -Gx),
        lb.grad_y,
        spec.h(z.x, z.y),
        np.minimum(z.lam, -gz),
    ])
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    return r, norm


# --- Kojima mapping --------------------------------------------------------


def to_kojima(spec: ProblemSpec, z: PrimalDualPoint) -> KojimaPoint:
    w = z.v + spec.G(z.x)
    xi = z.lam + spec.g(z.x, z.y)
    return KojimaPoint(x=z.x.copy(), u=z.u.copy(), w=w, y=z.y.copy(), mu=z.mu.copy(), xi=xi)


def from_kojima(spec: ProblemSpec, k: KojimaPoint) -> PrimalDualPoint:
    return PrimalDualPoint(x=k.x.copy(), u=k.u.copy(), v=k.w_plus, y=k.y.copy(), mu=k.mu.copy(), lam=k.xi_plus)


def active_sets(spec: ProblemSpec, z: PrimalDualPoint, tol_act: float = 1e-8) -> ActiveSets:
    gz = spec.g(z.x, z.y)
    Gx = spec.G(z.x)
    alpha_mask = gz >= -tol_act
    beta_mask = Gx >= -tol_act
    plus_mask = beta_mask & (z.v > tol_act)
    idx = np.arange
    margins = {
        "tol_act": tol_act,
        "g": gz.tolist(),
        "G": Gx.tolist(),
        "lam": z.lam.tolist(),
        "v": z.v.tolist(),
        # distance of each decision quantity from its threshold
        "alpha_decision": np.abs(gz + tol_act).tolist(),
        "beta_decision": np.abs(Gx + tol_act).tolist(),
        "beta_plus_decision": np.abs(z.v - tol_act).tolist(),
    }
    return ActiveSets(
        alpha=idx(spec.dims.m2)[alpha_mask],
        alpha_c=idx(spec.dims.m2)[~alpha_mask],
        beta=idx(spec.dims.n2)[beta_mask],
        beta_plus=idx(spec.dims.n2)[plus_mask],
        beta_zero=idx(spec.dims.n2)[beta_mask & ~plus_mask],
        beta_c=idx(spec.dims.n2)[~beta_mask],
        margins=margins,
    )


def kojima_function_part(spec_or_bundle, dims: Dimensions, k: KojimaPoint) -> np.ndarray:
    """Kojima mapping without the ``-w^-`` and ``+xi^-`` split terms.

    Linear in the problem functions, so evaluated on a bundle of
    theta-derivatives it yields the parameter partials of the mapping.
    """
    b = spec_or_bundle.bundle if isinstance(spec_or_bundle, ProblemSpec) else spec_or_bundle
    n = dims.n
    z = np.concatenate([k.x, k.y])
    lam = k.xi_plus
    grad = np.asarray(b.f_grad(z), dtype=float) + b.h_jac(z).T @ k.mu - b.g_jac(z).T @ lam
    return np.concatenate([
        grad[:n] + b.H_jac(k.x).T @ k.u + b.G_jac(k.x).T @ k.w_plus,
        np.asarray(b.H(k.x), dtype=float),
        np.asarray(b.G(k.x), dtype=float),
        grad[n:],
        np.asarray(b.h(z), dtype=float),
        -np.asarray(b.g(z), dtype=float),
    ])


def kojima_eval(spec: ProblemSpec, k: KojimaPoint, eta=None) -> np.ndarray:
    """F(k) - eta."""
    d = spec.dims
    F = kojima_function_part(spec, d, k)
    sl = block_slices(d)
    F[sl["w"]] -= k.w_minus
    F[sl["xi"]] += k.xi_minus
    if eta is not None:
        F = F - _vec(eta, d.kojima_size, "eta")
    return F


def kojima_matrix(spec: ProblemSpec, k: KojimaPoint, dw_plus, dxi_plus) -> np.ndarray:
    """Generalized Jacobian of F for given diagonals of d(w^+)/dw and d(xi^+)/dxi.

    The diagonals of d(w^-)/dw and d(xi^-)/dxi are the complements
    ``1 - dw_plus`` and ``1 - dxi_plus``.
    """
    d = spec.dims
    b = spec.bundle
    a = _vec(dw_plus, d.n2, "dw_plus")
    c = _vec(dxi_plus, d.m2, "dxi_plus")
    lam = k.xi_plus
    v = k.w_plus
    lb = lagrangian_blocks(spec, k.x, k.y, k.mu, lam)
    z = np.concatenate([k.x, k.y])
    Jh = b.h_jac(z).reshape(d.m1, d.n + d.m)
    Jg = b.g_jac(z).reshape(d.m2, d.n + d.m)
    JH = b.H_jac(k.x).reshape(d.n1, d.n)
    JG = b.G_jac(k.x).reshape(d.n2, d.n)
    Jxh, Jyh = Jh[:, : d.n], Jh[:, d.n:]
    Jxg, Jyg = Jg[:, : d.n], Jg[:, d.n:]
    G11 = lb.hess_xx + upper_hessian_terms(spec, k.x, k.u, v)

    sl = block_slices(d)
    N = d.kojima_size
    M = np.zeros((N, N))
    X, U, W, Y, MU, XI = (sl[s] for s in ("x", "u", "w", "y", "mu", "xi"))
    # row block 1: x-stationarity
    M[X, X] = G11
    M[X, U] = JH.T
    M[X, W] = JG.T * a
    M[X, Y] = lb.hess_xy
    M[X, MU] = Jxh.T
    M[X, XI] = -Jxg.T * c
    # row block 2: H
    M[U, X] = JH
    # row block 3: G - w^-
    M[W, X] = JG
    M[W, W] = -np.diag(1.0 - a)
    # row block 4: y-stationarity
    M[Y, X] = lb.hess_yx
    M[Y, Y] = lb.hess_yy
    M[Y, MU] = Jyh.T
    M[Y, XI] = -Jyg.T * c
    # row block 5: h
    M[MU, X] = Jxh
    M[MU, Y] = Jyh
    # row block 6: -g + xi^-
    M[XI, X] = -Jxg
    M[XI, Y] = -Jyg
    M[XI, XI] = np.diag(1.0 - c)
    return M


def degenerate_indices(k: KojimaPoint, tol_act: float = 1e-8):
    """Indices of w and xi within tol_act of the kink."""
    return (np.flatnonzero(np.abs(k.w) <= tol_act), np.flatnonzero(np.abs(k.xi) <= tol_act))


def kojima_jacobian(spec: ProblemSpec, k: KojimaPoint, tol_act: float = 1e-8) -> np.ndarray:
    """Classical Jacobian of F; requires every split coordinate off the kink."""
    dw, dxi = degenerate_indices(k, tol_act)
    if dw.size:
        raise DegenerateSplitError("w", dw)
    if dxi.size:
        raise DegenerateSplitError("xi", dxi)
    return kojima_matrix(spec, k, (k.w > 0).astype(float), (k.xi > 0).astype(float))


def kojima_b_subdiff_element(spec: ProblemSpec, k: KojimaPoint, omega, tol_act: float = 1e-8) -> np.ndarray:
    """Element of the generalized Jacobian with weights ``omega`` on the degenerate w indices.

    Vertices of [0, 1]^|beta0| give B-subdifferential elements; interior
    weights give elements of the Clarke hull.  The xi split must be strict.
    """
    dw, dxi = degenerate_indices(k, tol_act)
    if dxi.size:
        raise DegenerateSplitError("xi", dxi)
    omega = np.atleast_1d(np.asarray(omega, dtype=float)).reshape(-1)
    if omega.shape != (dw.size,):
        raise ValueError(f"omega has length {omega.shape[0]}, expected |beta0| = {dw.size}")
    if np.any(omega < 0.0) or np.any(omega > 1.0) or not np.all(np.isfinite(omega)):
        raise ValueError("omega components must lie in [0, 1]")
    a = (k.w > 0).astype(float)
    a[dw] = omega
    return kojima_matrix(spec, k, a, (k.xi > 0).astype(float))


def grouped_order(dims: Dimensions, sets: ActiveSets) -> np.ndarray:
    """Permutation putting Kojima coordinates in the grouped block layout.

    Order: x, u, w[beta+], w[beta0], w[beta^c], y, mu, xi[alpha], xi[alpha^c].
    Apply symmetrically: ``M[np.ix_(p, p)]``.
    """
    sl = block_slices(dims)
    rng = lambda s: np.arange(s.start, s.stop)  # noqa: E731
    w0 = sl["w"].start
    xi0 = sl["xi"].start
    return np.concatenate([
        rng(sl["x"]), rng(sl["u"]),
        w0 + sets.beta_plus, w0 + sets.beta_zero, w0 + sets.beta_c,
        rng(sl["y"]), rng(sl["mu"]),
        xi0 + sets.alpha, xi0 + sets.alpha_c,
    ]).astype(int)
