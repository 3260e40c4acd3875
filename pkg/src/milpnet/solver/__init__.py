"""Embedded MILP solving: LP relaxation, branch and bound, MPS export."""

from .branch_bound import SolveResult, SolverConfig, SolverStatus, solve
from .lp import HAVE_COMPILED_KERNEL, LpNumericalError, LpResult, kernel_name, solve_lp
from .mps import export_mps

__all__ = [
    "HAVE_COMPILED_KERNEL",
    "LpNumericalError",
    "LpResult",
    "SolveResult",
    "SolverConfig",
    "SolverStatus",
    "export_mps",
    "kernel_name",
    "solve",
    "solve_lp",
]
