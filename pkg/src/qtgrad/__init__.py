"""Gradient methods with two-dimensional quadratic termination."""

from .quadprob import (
    QuadraticProblem,
    SpectrumSpec,
    attach_random_minimizer,
    dense_problem,
    diagonal_problem,
    generate_spectrum,
    gradient,
    load_matrix_market,
    matvec,
    sparse_problem,
)
from .solver import (
    IterationTrace,
    SolverConfig,
    register_rule,
    run_algorithm1,
    run_fixed_rule,
    run_two_dim_termination_probe,
)
from .stepsize import PsiSpec

__version__ = "0.1.0"
