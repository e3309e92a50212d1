"""Exact mixed 0/1 LP solver: bounded revised simplex plus branch-and-bound."""

from .branch_and_bound import NODE_LIMIT, TIME_LIMIT, MilpSolution, most_fractional, solve_milp
from .problem import BINARY, CONTINUOUS, MilpProblem
from .simplex import (FEAS_TOL, INFEASIBLE, OPTIMAL, PIVOT_TOL, UNBOUNDED, Basis, LpSolution,
                      NumericalError, SimplexEngine, solve_lp)

__all__ = [
    "BINARY", "CONTINUOUS", "FEAS_TOL", "INFEASIBLE", "NODE_LIMIT", "OPTIMAL", "PIVOT_TOL",
    "TIME_LIMIT", "UNBOUNDED", "Basis", "LpSolution", "MilpProblem", "MilpSolution",
    "NumericalError", "SimplexEngine", "most_fractional", "solve_lp", "solve_milp",
]
