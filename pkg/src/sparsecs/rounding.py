"""Greedy rounding of a relaxation point into a feasible sparse vector.

Columns are added in descending score order until the least-squares
residual of b on the selected columns drops below the budget.  Each
extension updates the inverse Gram matrix through the one-column block
inversion identity, so a rounding pass with k selections costs
O(k^3 + m k^2) instead of the O(k^4) of repeated factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    NoFeasibleCompletion,
    ProblemInstance,
    SingularSchurComplement,
    SolutionVector,
    least_squares_residual_sq,
    validate,
)

#: Schur complements at or below this magnitude trigger the pseudo-inverse
#: fallback (the incoming column is numerically collinear with the basis).
SCHUR_TOL = 1e-12


@dataclass
class ProjectionState:
    """Running least-squares projection of b onto an ordered column set.

    Single-owner mutable; create one per rounding pass.
    """

    b: np.ndarray
    selected: list[int] = field(default_factory=list)
    columns: np.ndarray | None = None  # (m, |selected|)
    gram_inverse: np.ndarray | None = None
    atb: np.ndarray | None = None
    coefficients: np.ndarray | None = None
    residual: np.ndarray = None
    residual_sq: float = 0.0

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if self.columns is None:
            self.columns = np.empty((self.b.shape[0], 0))
            self.gram_inverse = np.empty((0, 0))
            self.atb = np.empty(0)
            self.coefficients = np.empty(0)
            self.residual = self.b.copy()
            self.residual_sq = float(self.b @ self.b)


def extend_gram_inverse(state: ProjectionState, new_column, index: int | None = None
                        ) -> ProjectionState:
    """Add one column to the projection state in O(k^2 + m k) operations.

    Raises SingularSchurComplement when the new column is numerically in
    the span of the current ones; the caller falls back to a fresh
    pseudo-inverse for that step.
    """
    a = np.asarray(new_column, dtype=float)
    C_inv = state.gram_inverse
    g = state.columns.T @ a
    d = float(a @ a)
    Cg = C_inv @ g
    schur = d - float(g @ Cg)
    if abs(schur) <= SCHUR_TOL:
        raise SingularSchurComplement(
            f"Schur complement {schur:.2e} at column {index}"
        )
    k = C_inv.shape[0]
    G_inv = np.empty((k + 1, k + 1))
    G_inv[:k, :k] = C_inv + np.outer(Cg, Cg) / schur
    G_inv[:k, k] = -Cg / schur
    G_inv[k, :k] = -Cg / schur
    G_inv[k, k] = 1.0 / schur
    return _advance(state, a, index, G_inv)


def _advance(state, a, index, G_inv) -> ProjectionState:
    columns = np.column_stack([state.columns, a])
    atb = np.append(state.atb, float(a @ state.b))
    coef = G_inv @ atb
    residual = state.b - columns @ coef
    out = ProjectionState(
        b=state.b,
        selected=state.selected + [index if index is not None else len(state.selected)],
        columns=columns,
        gram_inverse=G_inv,
        atb=atb,
        coefficients=coef,
        residual=residual,
        residual_sq=float(residual @ residual),
    )
    return out


def extend_pinv(state: ProjectionState, new_column, index: int | None = None
                ) -> ProjectionState:
    """Rank-safe extension through a fresh SVD pseudo-inverse."""
    a = np.asarray(new_column, dtype=float)
    columns = np.column_stack([state.columns, a])
    G_inv = np.linalg.pinv(columns.T @ columns)
    return _advance(state, a, index, G_inv)


def score_order(score) -> np.ndarray:
    """Column order by descending |score|, ties broken by lowest index."""
    s = np.abs(np.asarray(score, dtype=float))
    return np.argsort(-s, kind="stable")


def greedy_round(instance: ProblemInstance, score) -> SolutionVector:
    """Round a score vector into a feasible point (the upper-bound routine).

    Walks the columns in descending |score| order, keeping the running
    least-squares fit, and stops as soon as the squared residual is within
    the budget.  The support is therefore a prefix of the score order and
    the coefficients are the least-squares fit on that prefix.

    Raises NoFeasibleCompletion when even the full column set misses the
    budget.
    """
    validate(instance)
    score = np.asarray(score, dtype=float)
    if score.shape != (instance.n,):
        raise ValueError(f"score must have length {instance.n}")
    if least_squares_residual_sq(instance.A, instance.b) > instance.epsilon:
        raise NoFeasibleCompletion("full column set cannot reach the budget")

    state = ProjectionState(b=instance.b)
    order = score_order(score)
    pos = 0
    while state.residual_sq > instance.epsilon:
        i = int(order[pos])
        pos += 1
        column = instance.A[:, i]
        try:
            state = extend_gram_inverse(state, column, index=i)
        except SingularSchurComplement:
            state = extend_pinv(state, column, index=i)
    x = np.zeros(instance.n)
    x[state.selected] = state.coefficients
    return SolutionVector(x)
