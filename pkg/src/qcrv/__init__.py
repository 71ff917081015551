"""Spectral constrained minimization for null Q-curvature on flat tori.

The public surface re-exports the grid, operator, solver, continuation and
bubble-analysis entry points; see the submodules for details.
"""
from .analytic import (
    ProfileSpec,
    bubble_constant,
    make_profile,
    make_test_function,
    radial_bubble_mass,
    standard_bubble,
)
from .bubble import fit_standard_bubble, flatness_diagnostics, rescale, select_radius
from .constraints import constraint_report, project_to_Mstar, scaling_root
from .continuation import (
    ContinuationTrace,
    LambdaSchedule,
    check_derivative_identity,
    check_monotone,
    fit_log_slope,
    lambda_alpha_window,
    log_growth_brackets,
    sweep,
)
from .io import parse_config, read_snapshot, read_trace_csv, write_snapshot, write_trace_csv
from .minimizer import MinimizerResult, SolverOptions, minimize
from .spectral import TorusGrid, apply_gjms, apply_gjms_dense, energy

__version__ = "0.1.0"

__all__ = [
    "ContinuationTrace", "LambdaSchedule", "MinimizerResult", "ProfileSpec", "SolverOptions", "TorusGrid",
    "apply_gjms", "apply_gjms_dense", "bubble_constant", "check_derivative_identity", "check_monotone",
    "constraint_report", "energy", "fit_log_slope", "fit_standard_bubble", "flatness_diagnostics",
    "lambda_alpha_window", "log_growth_brackets", "make_profile", "make_test_function", "minimize",
    "parse_config", "project_to_Mstar", "radial_bubble_mass", "read_snapshot", "read_trace_csv", "rescale",
    "scaling_root", "select_radius", "standard_bubble", "sweep", "write_snapshot", "write_trace_csv",
]
