"""Optimal stopping for a two-valued drift before a drift-dependent deadline."""

from __future__ import annotations

from .boundary import (
    Boundary,
    check_monotone_transformed,
    extract_boundary,
    integral_equation_residual,
    inverse_transform,
    shape_features,
    solve_boundary_picard,
    terminal_limit,
    transform_boundary,
)
from .catalog import example_names, example_problem
from .errors import (
    AssumptionError,
    ConfigurationError,
    ConvergenceError,
    DeadlineStopError,
    DegenerateError,
    DomainError,
    ModelError,
    ParameterError,
)
from .model import DiscountModel, DiscountPair, ProblemSpec, embed_original, validate_assumptions
from .montecarlo import PolicyStats, evaluate_pi_formulation, evaluate_policy, suboptimality_probe
from .posterior import pi_from_x, simulate_paths, transition_moments
from .solver import GridSpec, ValueSurface, gain, pde_residual, smooth_fit_gap, solve, solve_finite, solve_infinite

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "Boundary",
    "ConfigurationError",
    "ConvergenceError",
    "DeadlineStopError",
    "DegenerateError",
    "DiscountModel",
    "DiscountPair",
    "DomainError",
    "GridSpec",
    "ModelError",
    "ParameterError",
    "PolicyStats",
    "ProblemSpec",
    "ValueSurface",
    "check_monotone_transformed",
    "embed_original",
    "evaluate_pi_formulation",
    "evaluate_policy",
    "example_names",
    "example_problem",
    "extract_boundary",
    "gain",
    "integral_equation_residual",
    "inverse_transform",
    "pde_residual",
    "pi_from_x",
    "shape_features",
    "simulate_paths",
    "smooth_fit_gap",
    "solve",
    "solve_boundary_picard",
    "solve_finite",
    "solve_infinite",
    "suboptimality_probe",
    "terminal_limit",
    "transform_boundary",
    "transition_moments",
    "validate_assumptions",
]
