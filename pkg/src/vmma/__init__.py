"""Galerkin solvers for the fourth-order regularization of the Monge-Ampere equation.

    -eps * Bilap(u) + det(D2u) = f   in a box,   u = g,  Lap(u) = q   on its boundary.

Two C1 discretizations share one assembly path: a Legendre spectral space and
bicubic Hermite finite elements.
"""
from .analysis import ConvergenceRecord, RateFit, error_norms, rate_fit, run_study
from .function_space import BoxDomain, build_space, read_solution, write_solution
from .nonlinear_solver import (SolveResult, SolverFailure, SolverOptions, epsilon_cascade,
                               newton_solve, seed_solution)
from .problem import ProblemSpec, builtin_problem, quadratic_problem

__version__ = "0.1.0"

__all__ = ["BoxDomain", "ConvergenceRecord", "ProblemSpec", "RateFit", "SolveResult",
           "SolverFailure", "SolverOptions", "build_space", "builtin_problem",
           "epsilon_cascade", "error_norms", "newton_solve", "quadratic_problem", "rate_fit",
           "read_solution", "run_study", "seed_solution", "write_solution"]
