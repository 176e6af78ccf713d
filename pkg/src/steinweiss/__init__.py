"""Weighted half-space kernel operators, their sharp constants and Euler-Lagrange systems."""

__version__ = "0.1.0"

from .params import (AdmissibilityReport, InequalityParams, SystemParams, derive_el_exponents,
                     pohozaev_residual, regularity_window, validate)
from .grid import Field, GridSpec, build_grids, build_equal_measure_grids
from .operators import KernelOperator, KernelParams, apply_V, apply_W, duality_gap, kernel
from .rearrangement import decreasing_rearrangement, lorentz_norm, lp_norm, riesz_check
from .extremal import SolveOptions, power_iterate
from .system import SystemOptions, solve_single_weight, solve_system

__all__ = [
    "AdmissibilityReport", "InequalityParams", "SystemParams", "derive_el_exponents",
    "pohozaev_residual", "regularity_window", "validate", "Field", "GridSpec", "build_grids",
    "build_equal_measure_grids", "KernelOperator", "KernelParams", "apply_V", "apply_W",
    "duality_gap", "kernel", "decreasing_rearrangement", "lorentz_norm", "lp_norm", "riesz_check",
    "SolveOptions", "power_iterate", "SystemOptions", "solve_single_weight", "solve_system",
]
