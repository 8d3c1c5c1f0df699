"""Problem representation for constrained minimax programs.

    min_{x in Phi} max_{y in Y(x)} f(x, y)

    Phi  = {x : H(x) = 0, G(x) <= 0}
    Y(x) = {y : h(x, y) = 0, g(x, y) <= 0}

Lower-level functions (f, h, g) are evaluated on the stacked variable
z = (x; y); upper-level constraints (H, G) on x alone.  Gradients are
returned over the whole stacked variable and Hessians as full matrices,
so callers slice out the x/y blocks themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "Dimensions",
    "QuadraticForm",
    "EvaluatorBundle",
    "ProblemSpec",
    "ParametricProblemSpec",
    "ProblemFormatError",
    "ValidationReport",
    "parse_problem",
    "parse_parametric",
    "load_document",
    "problem_to_document",
    "validate_spec",
    "freeze_parameter",
]


class ProblemFormatError(ValueError):
    """Raised when a problem document violates the LQ schema."""


@dataclass(frozen=True)
class Dimensions:
    n: int
    m: int
    n1: int = 0
    n2: int = 0
    m1: int = 0
    m2: int = 0

    def __post_init__(self):
        for name in ("n", "m", "n1", "n2", "m1", "m2"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise ProblemFormatError(f"dimension {name} must be an integer, got {val!r}")
            if val < 0:
                raise ProblemFormatError(f"dimension {name} must be nonnegative")
        if self.n < 1 or self.m < 1:
            raise ProblemFormatError("n and m must be at least 1")

    @property
    def kojima_size(self) -> int:
        return self.n + self.n1 + self.n2 + self.m + self.m1 + self.m2

    def as_dict(self) -> dict:
        return {k: int(getattr(self, k)) for k in ("n", "m", "n1", "n2", "m1", "m2")}


@dataclass(frozen=True)
class QuadraticForm:
    """``0.5 z'Qz + q'z + r``; Q must be symmetric."""

    Q: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        q = np.array(self.q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ProblemFormatError(f"quadratic block must be square, got shape {Q.shape}")
        if q.shape != (Q.shape[0],):
            raise ProblemFormatError(
                f"linear term has shape {q.shape}, expected ({Q.shape[0]},)"
            )
        if not np.array_equal(Q, Q.T):
            raise ProblemFormatError("asymmetric quadratic block")
        Q.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def zero(cls, dim: int) -> "QuadraticForm":
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0.0)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q @ z + self.q @ z + self.r)

    def grad(self, z) -> np.ndarray:
        return self.Q @ np.asarray(z, dtype=float) + self.q

    def hess(self, z=None) -> np.ndarray:
        return np.array(self.Q)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "r": self.r}


# --- evaluator bundles -----------------------------------------------------

ScalarFn = Callable[[np.ndarray], float]
VectorFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EvaluatorBundle:
    """Value/gradient/Hessian callables for every problem function.

    Vector-valued functions return arrays of shape (k,), Jacobians (k, d) and
    Hessians (k, d, d), where d = n + m for f, h, g and d = n for H, G.
    """

    f: ScalarFn
    f_grad: VectorFn
    f_hess: VectorFn
    h: VectorFn
    h_jac: VectorFn
    h_hess: VectorFn
    g: VectorFn
    g_jac: VectorFn
    g_hess: VectorFn
    H: VectorFn
    H_jac: VectorFn
    H_hess: VectorFn
    G: VectorFn
    G_jac: VectorFn
    G_hess: VectorFn


def _stack_forms(forms: Sequence[QuadraticForm], dim: int):
    """Vectorized evaluators for a list of quadratic forms over R^dim."""
    k = len(forms)
    if k:
        Qs = np.stack([fm.Q for fm in forms])
        qs = np.stack([fm.q for fm in forms])
        rs = np.array([fm.r for fm in forms])
    else:
        Qs = np.zeros((0, dim, dim))
        qs = np.zeros((0, dim))
        rs = np.zeros(0)
    for arr in (Qs, qs, rs):
        arr.setflags(write=False)

    def value(z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("kij,i,j->k", Qs, z, z) + qs @ z + rs

    def jac(z):
        z = np.asarray(z, dtype=float)
        return Qs @ z + qs

    def hess(z=None):
        return np.array(Qs)

    return value, jac, hess


def lq_bundle(
    dims: Dimensions,
    f: QuadraticForm,
    h: Sequence[QuadraticForm] = (),
    g: Sequence[QuadraticForm] = (),
    H: Sequence[QuadraticForm] = (),
    G: Sequence[QuadraticForm] = (),
) -> EvaluatorBundle:
    nz = dims.n + dims.m
    if f.dim != nz:
        raise ProblemFormatError(f"f is over dimension {f.dim}, expected {nz}")
    for name, forms, want, count in (
        ("h", h, nz, dims.m1),
        ("g", g, nz, dims.m2),
        ("H", H, dims.n, dims.n1),
        ("G", G, dims.n, dims.n2),
    ):
        if len(forms) != count:
            raise ProblemFormatError(f"{name} has {len(forms)} entries, dims declare {count}")
        for i, fm in enumerate(forms):
            if fm.dim != want:
                raise ProblemFormatError(f"{name}[{i}] is over dimension {fm.dim}, expected {want}")
    hv, hj, hh = _stack_forms(h, nz)
    gv, gj, gh = _stack_forms(g, nz)
    Hv, Hj, Hh = _stack_forms(H, dims.n)
    Gv, Gj, Gh = _stack_forms(G, dims.n)
    return EvaluatorBundle(
        f=f.value, f_grad=f.grad, f_hess=f.hess,
        h=hv, h_jac=hj, h_hess=hh,
        g=gv, g_jac=gj, g_hess=gh,
        H=Hv, H_jac=Hj, H_hess=Hh,
        G=Gv, G_jac=Gj, G_hess=Gh,
    )


@dataclass(frozen=True)
class ProblemSpec:
    dims: Dimensions
    bundle: EvaluatorBundle
    name: str = "problem"
    # kept for LQ problems so the document can be re-emitted
    forms: dict | None = field(default=None, compare=False, repr=False)

    # convenience accessors on split (x, y) arguments

    def z(self, x, y) -> np.ndarray:
        return np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)),
                               np.atleast_1d(np.asarray(y, dtype=float))])

    def f(self, x, y) -> float:
        return float(self.bundle.f(self.z(x, y)))

    def h(self, x, y) -> np.ndarray:
        return np.asarray(self.bundle.h(self.z(x, y)), dtype=float)

    def g(self, x, y) -> np.ndarray:
        return np.asarray(self.bundle.g(self.z(x, y)), dtype=float)

    def H(self, x) -> np.ndarray:
        return np.asarray(self.bundle.H(np.asarray(x, dtype=float)), dtype=float)

    def G(self, x) -> np.ndarray:
        return np.asarray(self.bundle.G(np.asarray(x, dtype=float)), dtype=float)

    @classmethod
    def from_forms(cls, dims, f, h=(), g=(), H=(), G=(), name="problem") -> "ProblemSpec":
        bundle = lq_bundle(dims, f, h, g, H, G)
        forms = {"f": f, "h": tuple(h), "g": tuple(g), "H": tuple(H), "G": tuple(G)}
        return cls(dims=dims, bundle=bundle, name=name, forms=forms)


# --- parametric problems ---------------------------------------------------


@dataclass(frozen=True)
class ParametricProblemSpec:
    """Problem family depending on a parameter theta in R^l.

    ``bundle_at(theta)`` returns the evaluators with theta frozen and
    ``dtheta(theta, k)`` returns an evaluator bundle holding the partial
    derivatives of every function (value, gradient, Hessian) with respect
    to theta_k.
    """

    dims: Dimensions
    l: int
    theta0: np.ndarray
    bundle_at: Callable[[np.ndarray], EvaluatorBundle]
    dtheta: Callable[[np.ndarray, int], EvaluatorBundle]
    name: str = "parametric"
    base_forms: dict | None = field(default=None, compare=False, repr=False)
    param_forms: dict | None = field(default=None, compare=False, repr=False)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.l,):
            raise ValueError(f"parameter has length {theta.shape[0]}, expected {self.l}")
        return theta

    @classmethod
    def from_forms(cls, base: dict, dforms: dict, dims: Dimensions, l: int, theta0,
                   name: str = "parametric") -> "ParametricProblemSpec":
        """Affine parameter dependence ``fn(z, th) = fn0(z) + sum_k (th_k - th0_k) dfn_k(z)``.

        ``dforms[key]`` is a list over k of forms (for f) or a list over
        constraints of lists over k (for h, g, H, G).
        """
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        if theta0.shape != (l,):
            raise ProblemFormatError(f"theta0 has length {theta0.shape[0]}, expected {l}")
        nz = dims.n + dims.m
        sizes = {"h": (dims.m1, nz), "g": (dims.m2, nz), "H": (dims.n1, dims.n), "G": (dims.n2, dims.n)}
        df = list(dforms.get("f") or [QuadraticForm.zero(nz) for _ in range(l)])
        if len(df) != l:
            raise ProblemFormatError(f"parameters.f has {len(df)} entries, expected l={l}")
        dcon = {}
        for key, (count, dim) in sizes.items():
            entry = dforms.get(key)
            if entry is None:
                entry = [[QuadraticForm.zero(dim) for _ in range(l)] for _ in range(count)]
            if len(entry) != count:
                raise ProblemFormatError(f"parameters.{key} has {len(entry)} entries, expected {count}")
            for i, per_k in enumerate(entry):
                if len(per_k) != l:
                    raise ProblemFormatError(f"parameters.{key}[{i}] has {len(per_k)} entries, expected l={l}")
                for fm in per_k:
                    if fm.dim != dim:
                        raise ProblemFormatError(f"parameters.{key}[{i}] form over dimension {fm.dim}, expected {dim}")
            dcon[key] = [list(per_k) for per_k in entry]
        for fm in df:
            if fm.dim != nz:
                raise ProblemFormatError(f"parameters.f form over dimension {fm.dim}, expected {nz}")

        def combine(f0: QuadraticForm, ds: Sequence[QuadraticForm], shift: np.ndarray) -> QuadraticForm:
            Q = f0.Q.copy()
            q = f0.q.copy()
            r = f0.r
            for s, d in zip(shift, ds):
                Q = Q + s * d.Q
                q = q + s * d.q
                r = r + s * d.r
            # symmetric up to roundoff by construction
            return QuadraticForm(0.5 * (Q + Q.T), q, r)

        def forms_at(theta):
            shift = theta - theta0
            return (
                combine(base["f"], df, shift),
                [combine(c, dcon["h"][i], shift) for i, c in enumerate(base["h"])],
                [combine(c, dcon["g"][i], shift) for i, c in enumerate(base["g"])],
                [combine(c, dcon["H"][i], shift) for i, c in enumerate(base["H"])],
                [combine(c, dcon["G"][i], shift) for i, c in enumerate(base["G"])],
            )

        def bundle_at(theta):
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            if theta.shape != (l,):
                raise ValueError(f"parameter has length {theta.shape[0]}, expected {l}")
            return lq_bundle(dims, *forms_at(theta))

        dbundles = [
            lq_bundle(
                dims,
                df[k],
                [dcon["h"][i][k] for i in range(dims.m1)],
                [dcon["g"][i][k] for i in range(dims.m2)],
                [dcon["H"][i][k] for i in range(dims.n1)],
                [dcon["G"][i][k] for i in range(dims.n2)],
            )
            for k in range(l)
        ]

        def dtheta(theta, k):
            return dbundles[k]

        return cls(dims=dims, l=l, theta0=theta0, bundle_at=bundle_at, dtheta=dtheta,
                   name=name, base_forms=base, param_forms={"f": df, **dcon})

    def base_problem(self) -> ProblemSpec:
        return freeze_parameter(self, self.theta0)


def freeze_parameter(pspec: ParametricProblemSpec, theta) -> ProblemSpec:
    theta = pspec.check_theta(theta)
    return ProblemSpec(dims=pspec.dims, bundle=pspec.bundle_at(theta),
                       name=f"{pspec.name}@{theta.tolist()}")


# --- documents -------------------------------------------------------------

_TOP_FIELDS = {"name", "dims", "f", "h", "g", "H", "G"}
_PARAM_FIELDS = {"l", "theta0", "f", "h", "g", "H", "G"}
_FORM_FIELDS = {"Q", "q", "r"}


def _as_number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ProblemFormatError(f"{where}: expected a number, got {val!r}")
    return float(val)


def _parse_form(obj, dim: int, where: str) -> QuadraticForm:
    if not isinstance(obj, dict):
        raise ProblemFormatError(f"{where}: quadratic form must be an object")
    missing = _FORM_FIELDS - obj.keys()
    extra = obj.keys() - _FORM_FIELDS
    if missing:
        raise ProblemFormatError(f"{where}: missing field(s) {sorted(missing)}")
    if extra:
        raise ProblemFormatError(f"{where}: unknown field(s) {sorted(extra)}")
    Q = obj["Q"]
    if not isinstance(Q, list) or len(Q) != dim or any(
        not isinstance(row, list) or len(row) != dim for row in Q
    ):
        raise ProblemFormatError(f"{where}.Q: expected a {dim}x{dim} array")
    q = obj["q"]
    if not isinstance(q, list) or len(q) != dim:
        raise ProblemFormatError(f"{where}.q: expected a length-{dim} array")
    Qa = np.array([[_as_number(v, f"{where}.Q") for v in row] for row in Q], dtype=float).reshape(dim, dim)
    qa = np.array([_as_number(v, f"{where}.q") for v in q], dtype=float)
    r = _as_number(obj["r"], f"{where}.r")
    if not np.array_equal(Qa, Qa.T):
        raise ProblemFormatError(f"{where}: asymmetric quadratic block")
    return QuadraticForm(Qa, qa, r)


def _parse_form_list(obj, count: int, dim: int, where: str) -> list[QuadraticForm]:
    if obj is None:
        obj = []
    if not isinstance(obj, list):
        raise ProblemFormatError(f"{where}: expected an array of quadratic forms")
    if len(obj) != count:
        raise ProblemFormatError(f"{where}: {len(obj)} entries, dims declare {count}")
    return [_parse_form(item, dim, f"{where}[{i}]") for i, item in enumerate(obj)]


def _parse_dims(obj) -> Dimensions:
    if not isinstance(obj, dict):
        raise ProblemFormatError("dims: expected an object")
    allowed = {"n", "m", "n1", "n2", "m1", "m2"}
    extra = obj.keys() - allowed
    if extra:
        raise ProblemFormatError(f"dims: unknown field(s) {sorted(extra)}")
    missing = allowed - obj.keys()
    if missing:
        raise ProblemFormatError(f"dims: missing field(s) {sorted(missing)}")
    return Dimensions(**{k: obj[k] for k in allowed})


def load_document(document) -> dict:
    if isinstance(document, dict):
        return document
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("top level must be an object")
    return doc


def _parse_base(doc: dict, allowed: set[str]):
    extra = doc.keys() - allowed
    if extra:
        raise ProblemFormatError(f"unknown field(s) {sorted(extra)}")
    for req in ("name", "dims", "f"):
        if req not in doc:
            raise ProblemFormatError(f"missing field {req!r}")
    if not isinstance(doc["name"], str):
        raise ProblemFormatError("name must be a string")
    dims = _parse_dims(doc["dims"])
    nz = dims.n + dims.m
    forms = {
        "f": _parse_form(doc["f"], nz, "f"),
        "h": _parse_form_list(doc.get("h"), dims.m1, nz, "h"),
        "g": _parse_form_list(doc.get("g"), dims.m2, nz, "g"),
        "H": _parse_form_list(doc.get("H"), dims.n1, dims.n, "H"),
        "G": _parse_form_list(doc.get("G"), dims.n2, dims.n, "G"),
    }
    return doc["name"], dims, forms


def parse_problem(document) -> ProblemSpec:
    """Parse an LQ problem document (JSON text or already-decoded dict)."""
    doc = load_document(document)
    name, dims, forms = _parse_base(doc, _TOP_FIELDS)
    return ProblemSpec.from_forms(dims, name=name, **forms)


def parse_parametric(document) -> ParametricProblemSpec:
    """Parse a document carrying a ``parameters`` block.

    ``parameters = {"l": l, "theta0": [...], "f": [form_k ...],
    "g": [[form_k ...] per constraint], ...}``; each form is the partial
    derivative of the corresponding function with respect to theta_k.
    """
    doc = load_document(document)
    if "parameters" not in doc:
        raise ProblemFormatError("missing field 'parameters'")
    name, dims, forms = _parse_base(doc, _TOP_FIELDS | {"parameters"})
    par = doc["parameters"]
    if not isinstance(par, dict):
        raise ProblemFormatError("parameters: expected an object")
    extra = par.keys() - _PARAM_FIELDS
    if extra:
        raise ProblemFormatError(f"parameters: unknown field(s) {sorted(extra)}")
    if "l" not in par or "theta0" not in par:
        raise ProblemFormatError("parameters: 'l' and 'theta0' are required")
    l = par["l"]
    if isinstance(l, bool) or not isinstance(l, int) or l < 1:
        raise ProblemFormatError("parameters.l must be a positive integer")
    theta0 = par["theta0"]
    if not isinstance(theta0, list) or len(theta0) != l:
        raise ProblemFormatError(f"parameters.theta0: expected a length-{l} array")
    theta0 = np.array([_as_number(v, "parameters.theta0") for v in theta0])
    nz = dims.n + dims.m
    dforms: dict[str, Any] = {}
    if "f" in par:
        dforms["f"] = _parse_form_list(par["f"], l, nz, "parameters.f")
    for key, count, dim in (("h", dims.m1, nz), ("g", dims.m2, nz), ("H", dims.n1, dims.n), ("G", dims.n2, dims.n)):
        if key in par:
            entry = par[key]
            if not isinstance(entry, list) or len(entry) != count:
                raise ProblemFormatError(f"parameters.{key}: expected {count} entries")
            dforms[key] = [_parse_form_list(per_k, l, dim, f"parameters.{key}[{i}]")
                           for i, per_k in enumerate(entry)]
    return ParametricProblemSpec.from_forms(forms, dforms, dims, l, theta0, name=name)


def problem_to_document(spec: ProblemSpec) -> dict:
    if spec.forms is None:
        raise ValueError(f"problem {spec.name!r} is not an LQ problem and has no document form")
    fm = spec.forms
    return {
        "name": spec.name,
        "dims": spec.dims.as_dict(),
        "f": fm["f"].to_dict(),
        "h": [c.to_dict() for c in fm["h"]],
        "g": [c.to_dict() for c in fm["g"]],
        "H": [c.to_dict() for c in fm["H"]],
        "G": [c.to_dict() for c in fm["G"]],
    }


def parametric_to_document(pspec: ParametricProblemSpec) -> dict:
    if pspec.base_forms is None or pspec.param_forms is None:
        raise ValueError("parametric problem has no document form")
    base = ProblemSpec.from_forms(pspec.dims, name=pspec.name, **pspec.base_forms)
    doc = problem_to_document(base)
    pf = pspec.param_forms
    doc["parameters"] = {
        "l": pspec.l,
        "theta0": pspec.theta0.tolist(),
        "f": [d.to_dict() for d in pf["f"]],
        **{key: [[d.to_dict() for d in per_k] for per_k in pf[key]] for key in ("h", "g", "H", "G")},
    }
    return doc


# --- validation ------------------------------------------------------------


@dataclass
class ValidationReport:
    ok: bool
    failures: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)


def validate_spec(spec: ProblemSpec, probe=None, sym_tol: float = 1e-12) -> ValidationReport:
    """Dimension consistency, Hessian symmetry and evaluator determinism at a probe."""
    d = spec.dims
    nz = d.n + d.m
    if probe is None:
        probe = np.linspace(0.1, 0.9, nz)
    z = np.asarray(probe, dtype=float)
    x = z[: d.n]
    b = spec.bundle
    failures: list[str] = []
    checks: dict[str, bool] = {}

    expected = {
        "f_grad": (nz,), "f_hess": (nz, nz),
        "h": (d.m1,), "h_jac": (d.m1, nz), "h_hess": (d.m1, nz, nz),
        "g": (d.m2,), "g_jac": (d.m2, nz), "g_hess": (d.m2, nz, nz),
        "H": (d.n1,), "H_jac": (d.n1, d.n), "H_hess": (d.n1, d.n, d.n),
        "G": (d.n2,), "G_jac": (d.n2, d.n), "G_hess": (d.n2, d.n, d.n),
    }
    outputs: dict[str, Any] = {}
    for name, shape in [("f", ())] + list(expected.items()):
        fn = getattr(b, name)
        arg = x if name[0] in "HG" else z
        try:
            first = np.asarray(fn(arg), dtype=float)
            second = np.asarray(fn(arg), dtype=float)
        except Exception as exc:  # report, do not raise
            failures.append(f"{name}: evaluation failed ({exc})")
            checks[f"dims.{name}"] = False
            continue
        outputs[name] = first
        ok_shape = first.shape == shape
        checks[f"dims.{name}"] = ok_shape
        if not ok_shape:
            failures.append(f"{name}: dimension mismatch, got {first.shape}, expected {shape}")
        same = first.shape == second.shape and np.array_equal(first, second, equal_nan=True)
        checks[f"determinism.{name}"] = same
        if not same:
            failures.append(f"{name}: nondeterministic evaluator")

    for name in ("f_hess", "h_hess", "g_hess", "H_hess", "G_hess"):
        arr = outputs.get(name)
        if arr is None or not checks.get(f"dims.{name}", False):
            continue
        asym = float(np.max(np.abs(arr - np.swapaxes(arr, -1, -2)))) if arr.size else 0.0
        ok = asym <= sym_tol
        checks[f"symmetry.{name}"] = ok
        if not ok:
            failures.append(f"{name}: Hessian asymmetry {asym:.3e}")
    return ValidationReport(ok=not failures, failures=failures, checks=checks)
