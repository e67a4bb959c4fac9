"""Benchmark heuristics: orthogonal matching pursuit, iteratively reweighted
l1, and greedy sparsification of a dense solution."""

from __future__ import annotations

import numpy as np

from . import rounding
from .core import (
    NoFeasibleCompletion,
    NonPositiveParameter,
    ProblemInstance,
    SingularSchurComplement,
    SolutionVector,
    least_squares_residual_sq,
    validate,
)
from .relaxations import solve_weighted_bpd

#: Iterate-change threshold at which reweighting is declared converged.
IRWL1_CONVERGENCE_TOL = 1e-6


def omp(instance: ProblemInstance) -> SolutionVector:
    """Orthogonal matching pursuit.

    Repeatedly selects the column most collinear with the current residual
    (argmax |a_i @ r|, first index on ties) and re-fits by least squares,
    stopping once the squared residual is within the budget.
    """
    validate(instance)
    if least_squares_residual_sq(instance.A, instance.b) > instance.epsilon:
        raise NoFeasibleCompletion("full column set cannot reach the budget")

    state = rounding.ProjectionState(b=instance.b)
    available = np.ones(instance.n, dtype=bool)
    while state.residual_sq > instance.epsilon:
        corr = np.abs(instance.A.T @ state.residual)
        corr[~available] = -1.0
        i = int(np.argmax(corr))
        available[i] = False
        column = instance.A[:, i]
        try:
            state = rounding.extend_gram_inverse(state, column, index=i)
        except SingularSchurComplement:
            state = rounding.extend_pinv(state, column, index=i)
    x = np.zeros(instance.n)
    x[state.selected] = state.coefficients
    return SolutionVector(x)


def irwl1(
    instance: ProblemInstance,
    stability_delta: float = 1e-4,
    max_iters: int = 50,
) -> SolutionVector:
    """Iteratively reweighted l1 minimization.

    Starts from unit weights, alternates a weighted basis-pursuit-denoising
    solve with the update w_i <- 1 / (|x_i| + delta), and stops after
    ``max_iters`` rounds or once two successive iterates differ by at most
    1e-6 in l2 norm.
    """
    validate(instance)
    if not stability_delta > 0:
        raise NonPositiveParameter("stability_delta must be positive")
    w = np.ones(instance.n)
    prev = None
    sol = None
    for _ in range(max_iters):
        sol = solve_weighted_bpd(instance, w)
        if prev is not None and np.linalg.norm(sol.x - prev) <= IRWL1_CONVERGENCE_TOL:
            break
        prev = sol.x
        w = 1.0 / (np.abs(sol.x) + stability_delta)
    return sol


def sparsify(instance: ProblemInstance, x) -> SolutionVector:
    """Greedy rounding of an arbitrary vector, scored by its magnitudes."""
    return rounding.greedy_round(instance, np.abs(np.asarray(x, dtype=float)))
