"""Mixed-integer linear programs: model container, solver backends, LP text export."""

from .lpformat import count_binaries, export_lp_text
from .model import BINARY, CONTINUOUS, EQ, GE, LE, MilpError, MilpModel, ModelBuilder, Variable
from .solve import (
    BACKENDS,
    DEFAULT_REL_GAP,
    GAP_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    TIME_LIMIT,
    UNBOUNDED,
    MilpSolution,
    SolveOptions,
    SolverError,
    check_feasibility,
    solve,
    solve_lp_dense,
)

__all__ = [
    "BACKENDS", "BINARY", "CONTINUOUS", "DEFAULT_REL_GAP", "EQ", "GAP_LIMIT", "GE", "INFEASIBLE",
    "LE", "OPTIMAL", "TIME_LIMIT", "UNBOUNDED", "MilpError", "MilpModel", "MilpSolution",
    "ModelBuilder", "SolveOptions", "SolverError", "Variable", "check_feasibility",
    "count_binaries", "export_lp_text", "solve", "solve_lp_dense",
]
