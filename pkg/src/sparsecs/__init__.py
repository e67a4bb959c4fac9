"""Sparse recovery with certified optimality.

Find the sparsest vector consistent with linear measurements up to a
residual budget, by branch-and-bound over a conic reformulation of the
L2-regularized L0 problem, with convex relaxations (basis pursuit
denoising, perspective, big-M, sum-of-squares) and benchmark heuristics
(OMP, IRWL1, greedy rounding).
"""

from .backends import SolverStatus, StatusCode, solve_conic
from .bnb import BnBConfig, BnBResult, compute_backbone
from .conic import ConicProgram, ProgramBuilder
from .core import (
    ProblemInstance,
    SolutionVector,
    load_instance,
    objective,
    residual_sq,
    save_instance,
    validate,
)
from .experiments import SyntheticSpec, brute_force_oracle, evaluate, generate
from .heuristics import irwl1, omp, sparsify
from .relaxations import (
    DualPoint,
    RelaxationSolution,
    compute_gamma0,
    solve_bpd,
    solve_node_dual,
    solve_node_primal,
    solve_perspective_relaxation,
    solve_weighted_bpd,
    theorem2_bound,
)
from .rounding import greedy_round
from .sos import SosCertificate, solve_sos_d1, verify_certificate

from . import bnb  # noqa: F401  (namespaced access to solve())

__version__ = "0.1.0"
