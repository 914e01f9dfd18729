"""Regularized asymptotic expansions for singularly perturbed parabolic systems.

The problem class is ``(eps + t) u_t - eps^2 A(x) u_xx - D(t) u = f`` on
``(0, 1) x (0, T]`` with ``u(x, 0) = h(x)`` and zero wall values.
"""

from .errors import (
    AssemblyError,
    AssumptionError,
    DegeneracyError,
    NumericalError,
    PerturbaError,
    SpecificationError,
    UnsupportedOrderError,
)
from .iteration import K_MAX, AsymptoticTerm, Expansion, build_expansion
from .problem import ProblemSpec, load_problem, preset, preset_names, validate_assumptions
from .reference import build_mesh, solve_reference
from .series import GridField, boundary_residuals, evaluate_partial_sum
from .spectral import SpectralData, decompose
from .verification import ConvergenceReport, convergence_study, emit_report, error_norm

__all__ = [
    "AssemblyError",
    "AssumptionError",
    "AsymptoticTerm",
    "ConvergenceReport",
    "DegeneracyError",
    "Expansion",
    "GridField",
    "K_MAX",
    "NumericalError",
    "PerturbaError",
    "ProblemSpec",
    "SpecificationError",
    "SpectralData",
    "UnsupportedOrderError",
    "boundary_residuals",
    "build_expansion",
    "build_mesh",
    "convergence_study",
    "decompose",
    "emit_report",
    "error_norm",
    "evaluate_partial_sum",
    "load_problem",
    "preset",
    "preset_names",
    "solve_reference",
    "validate_assumptions",
]
