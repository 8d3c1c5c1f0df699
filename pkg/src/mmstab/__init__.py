"""Stability certificates for constrained minimax problems min_x max_y f(x, y)."""

from .conditions import check_upper_conditions
from .kkt import KojimaPoint, PrimalDualPoint, Tolerances
from .lower import check_lower_ju, solve_lower
from .problem import ParametricProblemSpec, ProblemFormatError, ProblemSpec, parse_parametric, parse_problem
from .regularity import certify_strong_regularity, lipschitz_stability
from .sensitivity import sensitivity_bundle
from .solver import newton_kojima, track_path

__version__ = "0.1.0"

__all__ = [
    "ProblemSpec", "ParametricProblemSpec", "ProblemFormatError", "parse_problem", "parse_parametric",
    "PrimalDualPoint", "KojimaPoint", "Tolerances", "solve_lower", "check_lower_ju",
    "check_upper_conditions", "sensitivity_bundle", "newton_kojima", "track_path",
    "certify_strong_regularity", "lipschitz_stability",
]
