"""LP relaxations, branch-and-bound and MPS input/output."""

from .bnb import (BEST_BOUND, DEPTH_FIRST, MOST_FRACTIONAL, PSEUDO_COST, IncumbentError,
                  SolveResult, SolverError, SolverOptions, branch_and_bound, install_incumbent)
from .lp import LPResult, solve_lp
from .mps import MpsError, export_mps, parse_mps, read_mps, write_mps

__all__ = [
    "BEST_BOUND", "DEPTH_FIRST", "MOST_FRACTIONAL", "PSEUDO_COST", "IncumbentError",
    "SolveResult", "SolverError", "SolverOptions", "branch_and_bound", "install_incumbent",
    "LPResult", "solve_lp", "MpsError", "export_mps", "parse_mps", "read_mps", "write_mps",
]
