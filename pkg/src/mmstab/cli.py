"""Command-line front end.

Exit codes: 0 all requested certificates pass, 1 a certificate fails,
2 usage / IO / document error, 3 numerical failure.

A problem argument is a path to a JSON document or ``builtin:<name>``.
Documents are either a bare problem or ``{"problem": ..., "solution": ...}``;
a ``parameters`` block inside the problem makes it parametric.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .conditions import check_upper_conditions, lower_solution_at
from .corpus import EXPECTED, all_builtins, builtin, parametric_p1, parametric_p3
from .diff import ValueProbeError, fd_value_hessian
from .generator import GeneratorConfig, generate_instance
from .kkt import PrimalDualPoint, Tolerances, from_kojima, to_kojima
from .lower import LowerSolveError, check_lower_ju, solve_lower
from .oracle import GridOracleConfig, OracleError, grid_minimax_check, growth_check
from .problem import (
    ParametricProblemSpec,
    ProblemFormatError,
    ProblemSpec,
    load_document,
    parametric_to_document,
    parse_parametric,
    parse_problem,
    problem_to_document,
)
from .regularity import Caps, certify_strong_regularity, lipschitz_stability
from .report import AnalysisReport, ReportError, document_hash, emit_report
from .sensitivity import SingularBlockError, sensitivity_bundle, value_hessian
from .solver import NewtonError, NewtonOptions, PathError, newton_kojima, track_path

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

_PARAMETRIC_BUILTINS = {"p3-param": parametric_p3, "p1-param": parametric_p1}

# expected grid-oracle verdicts for builtins with n, m <= 2
ORACLE_EXPECTED = {
    "p1": True, "p2": True, "p2-extended": True, "p3": True, "p3-edited": False,
    "neg-concave": False, "neg-lower-sosc": False, "neg-lower-sc": True,
}

FD_REL_TOL = 1e-4


class UsageError(Exception):
    pass


# --- loading -----------------------------------------------------------------


class Loaded:
    def __init__(self, spec, pspec, z, doc):
        self.spec: ProblemSpec = spec
        self.pspec: ParametricProblemSpec | None = pspec
        self.z: PrimalDualPoint | None = z
        self.doc = doc

    @property
    def hash(self) -> str:
        return document_hash(self.doc)


def load(arg: str) -> Loaded:
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        if name in _PARAMETRIC_BUILTINS:
            pspec = _PARAMETRIC_BUILTINS[name]()
            base = builtin(name.split("-")[0])
            return Loaded(pspec.base_problem(), pspec, base.solution, parametric_to_document(pspec))
        try:
            b = builtin(name)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
        return Loaded(b.spec, None, b.solution, problem_to_document(b.spec))
    try:
        text = Path(arg).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {arg}: {exc}") from None
    doc = load_document(text)
    prob = doc.get("problem", doc)
    if "parameters" in prob:
        pspec = parse_parametric(prob)
        spec = pspec.base_problem()
    else:
        pspec, spec = None, parse_problem(prob)
    z = None
    if "solution" in doc:
        sol = doc["solution"]
        if not isinstance(sol, dict) or not {"x", "y"} <= sol.keys():
            raise ProblemFormatError("solution must be an object with at least x and y")
        keys = {k: sol[k] for k in ("x", "y", "u", "v", "mu", "lam") if k in sol}
        try:
            z = PrimalDualPoint.make(spec.dims, **keys)
        except ValueError as exc:
            raise ProblemFormatError(f"solution: {exc}") from None
    return Loaded(spec, pspec, z, prob)


def _tols(args) -> Tolerances:
    return Tolerances(act=args.tol_act, kkt=args.tol_kkt, rank=args.tol_rank, sosc=args.tol_sosc)


def _newton_opts(args) -> NewtonOptions:
    return NewtonOptions(tol=1e-10, max_iter=args.max_iter, damping=args.damping, tol_act=args.tol_act)


def _point(loaded: Loaded, args, report: AnalysisReport) -> PrimalDualPoint:
    """Supplied solution, or a Newton solve from zeros."""
    if loaded.z is not None:
        report.sections["point_source"] = "document"
        return loaded.z
    spec = loaded.spec
    d = spec.dims
    z0 = PrimalDualPoint.make(d, np.zeros(d.n), np.zeros(d.m))
    k, trace = newton_kojima(spec, to_kojima(spec, z0), None, _newton_opts(args))
    report.sections["point_source"] = "solved from zeros"
    report.sections["solve"] = trace.as_dict()
    return from_kojima(spec, k)


@contextmanager
def _timed(report: AnalysisReport, phase: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        report.timings[phase] = time.perf_counter() - t0


def _new_report(command: str, loaded: Loaded | None, args) -> AnalysisReport:
    return AnalysisReport(
        command=command,
        problem=None if loaded is None else loaded.spec.name,
        problem_hash=None if loaded is None else loaded.hash,
        seed=args.seed,
        tolerances=_tols(args).as_dict(),
    )


# --- phases ------------------------------------------------------------------


def _check_phase(spec, z, tols):
    sol = lower_solution_at(spec, z, tols.act)
    upper = check_upper_conditions(spec, z, sol, tols)
    return sol, upper


def _sens_phase(spec, z, tols, fd: bool):
    sol = lower_solution_at(spec, z, tols.act)
    ju = check_lower_ju(spec, z.x, sol, tols)
    out = {"lower_ju": ju.as_dict()}
    verdicts = {"lower_ju": ju.passed}
    if not ju.passed:
        return out, verdicts
    bundle = sensitivity_bundle(spec, z.x, sol)
    out["bundle"] = bundle.as_dict()
    if fd:
        try:
            Hfd = fd_value_hessian(spec, z.x, sol)
        except ValueProbeError as exc:
            out["fd_check"] = {"error": str(exc)}
            verdicts["fd_match"] = False
            return out, verdicts
        H = bundle.hess_phi
        err = float(np.max(np.abs(H - Hfd)) / max(1.0, float(np.max(np.abs(H)))))
        out["fd_check"] = {"hess_fd": Hfd.tolist(), "relative_error": err, "tol": FD_REL_TOL}
        verdicts["fd_match"] = err <= FD_REL_TOL
    return out, verdicts


# --- commands ----------------------------------------------------------------


def cmd_solve(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("solve", loaded, args)
    spec = loaded.spec
    d = spec.dims
    z0 = loaded.z if (loaded.z is not None and not args.from_zero) else \
        PrimalDualPoint.make(d, np.zeros(d.n), np.zeros(d.m))
    with _timed(report, "solve"):
        k, trace = newton_kojima(spec, to_kojima(spec, z0), None, _newton_opts(args))
    report.sections["solve"] = trace.as_dict()
    report.sections["final_residual"] = trace.residuals[-1]
    report.sections["point"] = from_kojima(spec, k).as_dict()
    report.verdicts["converged"] = trace.converged
    return report


def cmd_check(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("check", loaded, args)
    tols = _tols(args)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    with _timed(report, "check"):
        _, upper = _check_phase(loaded.spec, z, tols)
    report.sections["point"] = z.as_dict()
    report.sections["conditions"] = upper.as_dict()
    report.verdicts.update(lower_ju=upper.lower.passed, def31=upper.def31, property_a=upper.property_a)
    return report


def cmd_sens(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("sens", loaded, args)
    tols = _tols(args)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    with _timed(report, "sensitivity"):
        out, verdicts = _sens_phase(loaded.spec, z, tols, args.fd_check)
    report.sections["sensitivity"] = out
    report.verdicts.update(verdicts)
    return report


def cmd_certify(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("certify", loaded, args)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    with _timed(report, "certify"):
        cert = certify_strong_regularity(loaded.spec, z, None, _tols(args), Caps(enum=args.enum_cap), args.seed)
    report.sections["certificate"] = cert.as_dict()
    report.verdicts["certified"] = cert.certified
    return report


def cmd_perturb(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("perturb", loaded, args)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    with _timed(report, "perturb"):
        chk = lipschitz_stability(loaded.spec, z, args.delta or 1e-3, args.samples, _newton_opts(args), args.seed)
    report.sections["lipschitz"] = chk.as_dict()
    report.verdicts["lipschitz_stable"] = chk.passed
    return report


def cmd_path(args) -> AnalysisReport:
    loaded = load(args.problem)
    if loaded.pspec is None:
        raise UsageError("path needs a parametric document (a 'parameters' block)")
    pspec = loaded.pspec
    report = _new_report("path", loaded, args)
    if pspec.l != 1:
        raise UsageError("path supports a scalar parameter only")
    grid = np.linspace(args.theta_from, args.theta_to, args.nodes)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    opts = _newton_opts(args)
    with _timed(report, "path"):
        try:
            res = track_path(pspec, [[t] for t in grid], to_kojima(loaded.spec, z), opts, args.mode, _tols(args))
        except PathError as exc:
            report.sections["path_error"] = {"node": exc.node, "reason": exc.reason, "message": str(exc),
                                             "item": exc.item}
            if exc.partial is not None:
                report.sections["path"] = exc.partial.as_dict()
            if exc.reason == "divergence":
                raise
            report.verdicts["path"] = False
            return report
    report.sections["path"] = res.as_dict()
    report.verdicts["path"] = all(res.verdicts)
    return report


def cmd_oracle(args) -> AnalysisReport:
    loaded = load(args.problem)
    report = _new_report("oracle", loaded, args)
    cfg = GridOracleConfig(delta0=args.delta if args.delta is not None else 0.1, points=args.grid)
    with _timed(report, "point"):
        z = _point(loaded, args, report)
    with _timed(report, "oracle"):
        verdict = grid_minimax_check(loaded.spec, z.x, z.y, cfg)
        growth = growth_check(loaded.spec, z.x, z.y, cfg)
    report.sections["minimax"] = verdict.as_dict()
    report.sections["growth"] = growth.as_dict()
    report.sections["grid"] = {"points": cfg.points, "delta0": cfg.delta0, "ladder": cfg.ladder()}
    report.verdicts["minimax"] = verdict.passed
    return report


def cmd_gen(args) -> AnalysisReport:
    cfg = GeneratorConfig(n=args.n, m=args.m, n1=args.n1, n2=args.n2, m1=args.m1, m2=args.m2,
                          alpha=args.alpha, beta_plus=args.beta_plus, beta_zero=args.beta_zero,
                          lower_margin=args.lower_margin, upper_margin=args.upper_margin,
                          seed=args.seed if args.seed is not None else 0)
    try:
        inst = generate_instance(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {"problem": inst.document(), **inst.sidecar()}
    if args.out:
        try:
            Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from None
    report = AnalysisReport(command="gen", problem=inst.spec.name, problem_hash=document_hash(inst.document()),
                            seed=cfg.seed, tolerances=_tols(args).as_dict())
    report.sections["config"] = cfg.as_dict()
    report.sections["expected"] = inst.expected
    report.sections["output"] = args.out
    if not args.out:
        report.sections["document"] = doc
    _, upper = _check_phase(inst.spec, inst.solution, _tols(args))
    report.verdicts["intended_certificate"] = upper.property_a if cfg.beta_zero else upper.def31
    return report


def _selftest_one(name, b, args, tols):
    spec, z = b.spec, b.solution
    out = {}
    _, upper = _check_phase(spec, z, tols)
    cert = certify_strong_regularity(spec, z, None, tols, Caps(enum=args.enum_cap), args.seed or 0)
    got = {"lower_ju": upper.lower.passed, "def31": upper.def31, "property_a": upper.property_a,
           "certified": cert.certified}
    out["verdicts"] = got
    out["def31_failures"] = upper.def31_failures()
    out["property_a_failures"] = upper.property_a_failures()
    ok = got == b.expected
    probes = []
    for x, want in b.probes:
        sol = solve_lower(spec, x, np.zeros(spec.dims.m))
        H = value_hessian(spec, x, sol)
        err = abs(float(H[0, 0]) - want)
        probes.append({"x": list(x), "hess_phi": H.tolist(), "expected": want, "error": err})
        ok &= err <= 1e-9
    out["probes"] = probes
    if name in ORACLE_EXPECTED:
        v = grid_minimax_check(spec, z.x, z.y, GridOracleConfig(points=args.grid))
        out["oracle"] = {"passed": v.passed, "expected": ORACLE_EXPECTED[name], "anomalies": v.anomalies}
        ok &= v.passed == ORACLE_EXPECTED[name]
    return out, ok


def cmd_selftest(args) -> AnalysisReport:
    report = AnalysisReport(command="selftest", seed=args.seed, tolerances=_tols(args).as_dict())
    tols = _tols(args)
    for name, b in all_builtins().items():
        with _timed(report, name):
            out, ok = _selftest_one(name, b, args, tols)
        out["expected"] = EXPECTED[name]
        out["problem_hash"] = document_hash(problem_to_document(b.spec))
        report.sections[name] = out
        report.verdicts[name] = bool(ok)
    p3 = builtin("p3")
    with _timed(report, "lipschitz"):
        chk = lipschitz_stability(p3.spec, p3.solution, 1e-3, args.samples, _newton_opts(args), args.seed or 0)
    report.sections["p3_lipschitz"] = chk.as_dict()
    report.verdicts["p3_lipschitz"] = chk.passed
    return report


COMMANDS = {
    "solve": cmd_solve, "check": cmd_check, "sens": cmd_sens, "certify": cmd_certify,
    "perturb": cmd_perturb, "path": cmd_path, "oracle": cmd_oracle, "gen": cmd_gen,
    "selftest": cmd_selftest,
}


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--tol-act", type=float, default=1e-8)
    p.add_argument("--tol-kkt", type=float, default=1e-8)
    p.add_argument("--tol-rank", type=float, default=1e-8)
    p.add_argument("--tol-sosc", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="write the JSON report here (default: stdout)")
    p.add_argument("--timings", action="store_true", help="include wall-clock per phase (breaks byte identity)")
    p.add_argument("--damping", choices=("none", "backtracking"), default="backtracking")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--enum-cap", type=int, default=16)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--samples", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmstab", description="Solve and certify constrained minimax problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("solve", "semismooth Newton on the Kojima mapping"),
                        ("check", "lower JU, full JU and Property A"),
                        ("sens", "value-function gradient and Hessian"),
                        ("certify", "generalized-Jacobian strong-regularity certificate"),
                        ("perturb", "canonical-perturbation Lipschitz experiment"),
                        ("path", "parametric path tracking"),
                        ("oracle", "grid check of the local minimax definition")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("problem", help="JSON document path or builtin:<name>")
        _common(p)
        if name == "solve":
            p.add_argument("--from-zero", action="store_true", help="ignore a supplied solution")
        if name == "sens":
            p.add_argument("--fd-check", action="store_true")
        if name == "path":
            p.add_argument("--theta-from", type=float, default=0.01)
            p.add_argument("--theta-to", type=float, default=0.1)
            p.add_argument("--nodes", type=int, default=10)
            p.add_argument("--mode", choices=("def31", "property_a"), default="def31")
    g = sub.add_parser("gen", help="emit a solution-embedded random LQ instance")
    _common(g)
    for k, v in (("n", 3), ("m", 2), ("n1", 0), ("n2", 0), ("m1", 0), ("m2", 0),
                 ("alpha", 0), ("beta-plus", 0), ("beta-zero", 0)):
        g.add_argument(f"--{k}", type=int, default=v)
    g.add_argument("--lower-margin", type=float, default=0.5)
    g.add_argument("--upper-margin", type=float, default=0.5)
    g.add_argument("--out", default=None)
    s = sub.add_parser("selftest", help="run the builtin corpus end to end")
    _common(s)
    s.set_defaults(samples=20)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command == "path" and args.nodes < 1:
        print("--nodes must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = COMMANDS[args.command](args)
        text = emit_report(report, args.report, args.timings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NewtonError, PathError, SingularBlockError, np.linalg.LinAlgError, ReportError,
            LowerSolveError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ProblemFormatError, OracleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.report is None or args.report == "-":
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
