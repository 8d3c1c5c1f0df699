"""Solution-embedded random LQ instances.

A primal-dual point and multipliers are drawn first; constraints are
quadratic forms centred at that point, then the objective's gradient and
Hessian blocks are solved for so that the point is a KKT point with the
requested active sets, lower curvature and reduced upper Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kkt import PrimalDualPoint, kojima_b_subdiff_element, to_kojima
from .lower import LowerSolution, assemble_K_alpha, assemble_N_alpha
from .problem import Dimensions, ParametricProblemSpec, ProblemFormatError, ProblemSpec, QuadraticForm, problem_to_document
from .sensitivity import schur_term

__all__ = ["GeneratorConfig", "GeneratedInstance", "generate_instance", "generate_parametric", "random_config"]


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 2
    m: int = 2
    n1: int = 0
    n2: int = 0
    m1: int = 0
    m2: int = 0
    alpha: int = 0
    beta_plus: int = 0
    beta_zero: int = 0
    lower_margin: float = 0.5
    # a negative value builds a control whose reduced Hessian is negative definite
    upper_margin: float = 0.5
    curvature: float = 0.3
    seed: int = 0

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.n, self.m, self.n1, self.n2, self.m1, self.m2)

    def validate(self) -> None:
        self.dims
        if self.alpha > self.m2 or self.alpha < 0:
            raise ValueError(f"requested |alpha|={self.alpha} exceeds m2={self.m2}")
        if self.beta_plus < 0 or self.beta_zero < 0 or self.beta_plus + self.beta_zero > self.n2:
            raise ValueError(f"requested |beta+|+|beta0|={self.beta_plus + self.beta_zero} exceeds n2={self.n2}")
        if self.m1 + self.alpha > self.m:
            raise ValueError("lower LICQ impossible: m1 + |alpha| > m")
        if self.n1 + self.beta_plus + self.beta_zero > self.n:
            raise ValueError("upper LICQ impossible: n1 + |beta| > n")
        if not self.lower_margin > 0:
            raise ValueError("lower_margin must be positive")
        if self.upper_margin == 0:
            raise ValueError("upper_margin must be nonzero")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class GeneratedInstance:
    spec: ProblemSpec
    solution: PrimalDualPoint
    config: GeneratorConfig
    sets: dict
    expected: dict

    def document(self) -> dict:
        return problem_to_document(self.spec)

    def sidecar(self) -> dict:
        return {"solution": self.solution.as_dict(), "active_sets": self.sets,
                "expected": self.expected, "config": self.config.as_dict()}


MAX_DRAWS = 200
LICQ_FLOOR = 0.1
# bound on cond of the generalized Jacobian at the two extreme weight vertices
COND_CAP = 1e4


def _sigma_min(A) -> float:
    if A.shape[0] == 0:
        return float("inf")
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def _sym(rng, k, scale):
    A = rng.standard_normal((k, k)) * scale
    return 0.5 * (A + A.T)


def _centred(A, b, c0, zs) -> QuadraticForm:
    """0.5 (z-zs)'A(z-zs) + b'(z-zs) + c0 in standard coefficients."""
    return QuadraticForm(A, b - A @ zs, 0.5 * zs @ A @ zs - b @ zs + c0)


def _jacobian_cond(spec: ProblemSpec, z: PrimalDualPoint, r0: int) -> float:
    k = to_kojima(spec, z)
    worst = 0.0
    for w in (0.0, 1.0):
        s = np.linalg.svd(kojima_b_subdiff_element(spec, k, np.full(r0, w)), compute_uv=False)
        worst = max(worst, s[0] / s[-1] if s[-1] > 0 else np.inf)
    return worst


def generate_instance(cfg: GeneratorConfig, name: str | None = None) -> GeneratedInstance:
    """Instance with the requested structure; redrawn until the Jacobian at z* is well conditioned."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    for _ in range(MAX_DRAWS):
        inst = _draw(cfg, rng, name)
        if _jacobian_cond(inst.spec, inst.solution, cfg.beta_zero) <= COND_CAP:
            return inst
    raise ValueError(f"no instance with Jacobian condition below {COND_CAP:g} in {MAX_DRAWS} draws")


def _draw(cfg: GeneratorConfig, rng, name) -> GeneratedInstance:
    d = cfg.dims
    n, m, nz = d.n, d.m, d.n + d.m
    xs = rng.standard_normal(n)
    ys = rng.standard_normal(m)
    zs = np.concatenate([xs, ys])
    kappa = cfg.curvature

    # multipliers
    lam = np.zeros(d.m2)
    lam[: cfg.alpha] = cfg.lower_margin + rng.uniform(0, 1, cfg.alpha)
    v = np.zeros(d.n2)
    v[: cfg.beta_plus] = cfg.lower_margin + rng.uniform(0, 1, cfg.beta_plus)
    u = rng.standard_normal(d.n1)
    mu = rng.standard_normal(d.m1)

    def slack(active):
        return 0.0 if active else -(cfg.lower_margin + rng.uniform(0, 1))

    nb = cfg.beta_plus + cfg.beta_zero
    # active gradients are redrawn until both LICQ stacks are well conditioned
    for _ in range(MAX_DRAWS):
        bh = rng.standard_normal((d.m1, nz))
        bg = rng.standard_normal((d.m2, nz))
        bH = rng.standard_normal((d.n1, n))
        bG = rng.standard_normal((d.n2, n))
        if (_sigma_min(np.vstack([bh, bg[: cfg.alpha]])[:, n:]) >= LICQ_FLOOR
                and _sigma_min(np.vstack([bH, bG[:nb]])) >= LICQ_FLOOR):
            break
    else:
        raise ValueError(f"no well-conditioned constraint draw in {MAX_DRAWS} attempts")
    h = [_centred(_sym(rng, nz, kappa), bh[i], 0.0, zs) for i in range(d.m1)]
    g = [_centred(_sym(rng, nz, kappa), bg[i], slack(i < cfg.alpha), zs) for i in range(d.m2)]
    H = [_centred(_sym(rng, n, kappa), bH[i], 0.0, xs) for i in range(d.n1)]
    G = [_centred(_sym(rng, n, kappa), bG[i], slack(i < nb), xs) for i in range(d.n2)]

    grad = lambda fs: np.array([fm.grad(zs) for fm in fs]).reshape(len(fs), nz)  # noqa: E731
    gradx = lambda fs: np.array([fm.grad(xs) for fm in fs]).reshape(len(fs), n)  # noqa: E731
    Jh, Jg, JH, JG = grad(h), grad(g), gradx(H), gradx(G)

    # stationarity: grad_x L + JH'u + JG'v = 0, grad_y L = 0, L = f + mu'h - lam'g
    gL = -(Jh.T @ mu) + Jg.T @ lam
    gf = gL.copy()
    gf[:n] -= JH.T @ u + JG.T @ v

    def weighted(fs, w, sl):
        out = np.zeros((sl.stop - sl.start,) * 2)
        for fm, wi in zip(fs, w):
            out += wi * fm.Q[sl, sl]
        return out

    X, Y = slice(0, n), slice(n, nz)
    # lower Hessian block: Hyy L = -(margin I + B B')
    B = rng.standard_normal((m, m)) * kappa
    target_yy = -(cfg.lower_margin * np.eye(m) + B @ B.T)
    Qyy = target_yy - weighted(h, mu, Y) + weighted(g, lam, Y)
    Qxy = rng.standard_normal((n, m))
    Q = np.zeros((nz, nz))
    Q[Y, Y] = Qyy
    Q[X, Y] = Qxy
    Q[Y, X] = Qxy.T
    f_tmp = QuadraticForm(0.5 * (Q + Q.T), np.zeros(nz), 0.0)
    tmp = ProblemSpec.from_forms(d, f_tmp, h, g, H, G)
    alpha = np.arange(cfg.alpha)
    sol = LowerSolution(x=xs, y=ys, mu=mu, lam=lam, xi=lam + tmp.g(xs, ys), residual=0.0,
                        alpha=alpha, alpha_c=np.arange(cfg.alpha, d.m2), margins={})
    S = schur_term(assemble_K_alpha(tmp, xs, sol), assemble_N_alpha(tmp, xs, sol))
    R, _ = np.linalg.qr(rng.standard_normal((n, n)))
    if cfg.upper_margin > 0:
        diag = cfg.upper_margin + rng.uniform(0, 1, n)
    else:
        diag = cfg.upper_margin * (1.0 + rng.uniform(0, 1, n))
    Psi = (R * diag) @ R.T
    Qxx = (Psi + S - weighted(h, mu, X) + weighted(g, lam, X)
           - sum((ui * fm.Q for ui, fm in zip(u, H)), np.zeros((n, n)))
           - sum((vi * fm.Q for vi, fm in zip(v, G)), np.zeros((n, n))))
    Q[X, X] = Qxx
    Q = 0.5 * (Q + Q.T)
    f = QuadraticForm(Q, gf - Q @ zs, float(rng.standard_normal()))
    name = name or f"gen-{cfg.seed}"
    spec = ProblemSpec.from_forms(d, f, h, g, H, G, name=name)
    z = PrimalDualPoint.make(d, xs, ys, u=u, v=v, mu=mu, lam=lam)
    sets = {
        "alpha": list(range(cfg.alpha)), "beta_plus": list(range(cfg.beta_plus)),
        "beta_zero": list(range(cfg.beta_plus, nb)),
    }
    # with n1 + |beta+| = n the affine hull of the critical cone is {0}
    upper_ok = cfg.upper_margin > 0 or d.n1 + cfg.beta_plus == n
    expected = {
        "lower_ju": True,
        "def31": upper_ok and cfg.beta_zero == 0,
        "property_a": upper_ok,
    }
    return GeneratedInstance(spec=spec, solution=z, config=cfg, sets=sets, expected=expected)


def random_config(rng, max_n=6, max_m=6, max_m1=3, max_m2=3, max_n1=2, max_n2=3,
                  beta_zero: bool | None = False, upper_margin=0.5) -> GeneratorConfig:
    """Random feasible structure; ``beta_zero`` None lets the degenerate set be random."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    m1 = int(rng.integers(0, min(max_m1, m - 1) + 1)) if m > 1 else 0
    m2 = int(rng.integers(0, max_m2 + 1))
    alpha = int(rng.integers(0, min(m2, m - m1) + 1))
    n1 = int(rng.integers(0, min(max_n1, n - 1) + 1)) if n > 1 else 0
    n2 = int(rng.integers(0, max_n2 + 1))
    room = min(n2, n - n1)
    nb = int(rng.integers(0, room + 1))
    if beta_zero is None:
        b0 = int(rng.integers(0, nb + 1))
    elif beta_zero:
        n2 = max(n2, 1)
        nb = max(nb, 1)
        b0 = int(rng.integers(1, nb + 1))
    else:
        b0 = 0
    return GeneratorConfig(n=n, m=m, n1=n1, n2=n2, m1=m1, m2=m2, alpha=alpha, beta_plus=nb - b0,
                           beta_zero=b0, upper_margin=upper_margin, seed=int(rng.integers(0, 2**31 - 1)))


def generate_parametric(cfg: GeneratorConfig, l: int = 1, scale: float = 0.5,
                        name: str | None = None) -> tuple[ParametricProblemSpec, GeneratedInstance]:
    """Generated instance with affine dependence on theta in the linear and constant terms."""
    inst = generate_instance(cfg, name)
    rng = np.random.default_rng(cfg.seed + 7919)
    d = cfg.dims
    nz = d.n + d.m
    lin = lambda dim: QuadraticForm(np.zeros((dim, dim)), rng.standard_normal(dim) * scale,  # noqa: E731
                                    float(rng.standard_normal() * scale))
    dforms = {
        "f": [lin(nz) for _ in range(l)],
        "h": [[lin(nz) for _ in range(l)] for _ in range(d.m1)],
        "g": [[lin(nz) for _ in range(l)] for _ in range(d.m2)],
        "H": [[lin(d.n) for _ in range(l)] for _ in range(d.n1)],
        "G": [[lin(d.n) for _ in range(l)] for _ in range(d.n2)],
    }
    base = inst.spec.forms
    if base is None:
        raise ProblemFormatError("generated instance lost its forms")
    pspec = ParametricProblemSpec.from_forms(base, dforms, d, l, np.zeros(l), name=name or f"pgen-{cfg.seed}")
    return pspec, inst
