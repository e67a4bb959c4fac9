"""Problem data model, validation, and objective evaluation.

The central object is :class:`ProblemInstance`, which bundles the sensing
matrix ``A``, the measurement vector ``b``, the squared-residual budget
``epsilon``, the regularization weight ``gamma`` and the per-coordinate
weights ``w``.  Everything downstream (relaxations, rounding, the
branch-and-bound search) consumes instances through this type.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

#: Magnitude below which an entry does not count toward the sparsity of a
#: solution.  Matches the threshold used by the evaluation metrics.
DEFAULT_SUPPORT_THRESHOLD = 1e-4


class SparseCSError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(SparseCSError):
    """Array shapes are inconsistent with each other."""


class NonPositiveParameter(SparseCSError):
    """epsilon or gamma is not strictly positive."""


class NonFiniteData(SparseCSError):
    """Input data contains NaN or infinities."""


class BackendFailure(SparseCSError):
    """The conic backend reported a numerical breakdown."""


class InfeasibleInstance(SparseCSError):
    """The residual ball {x : ||Ax - b||^2 <= eps} is empty."""


class NodeInfeasible(SparseCSError):
    """No point with the required zero pattern satisfies the residual budget."""


class NoFeasibleCompletion(SparseCSError):
    """Even the full column set cannot bring the residual below epsilon."""


class SingularSchurComplement(SparseCSError):
    """Incremental Gram-inverse update hit a (near-)singular pivot."""


class ProblemTooLarge(SparseCSError):
    """Instance exceeds the size guard of an exhaustive or SDP routine."""


class DegenerateInstance(SparseCSError):
    """||b||^2 <= epsilon, so the zero vector is already feasible."""


class UnboundedCoordinate(SparseCSError):
    """A coordinate maximization over the residual ball is unbounded."""


class EmptyPool(SparseCSError):
    """Node selection was attempted on an empty pool."""


class CompletePattern(SparseCSError):
    """Branching was attempted on a node with no free index."""


def _readonly(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable problem data (A, b, epsilon, gamma, weights).

    Parameters
    ----------
    A : (m, n) array
        Dense sensing matrix.
    b : (m,) array
        Measurement vector.
    epsilon : float
        Squared-residual budget; a vector x is feasible iff
        ``||A x - b||^2 <= epsilon``.
    gamma : float, optional
        Regularization weight on the squared coordinate norm.  Defaults to
        ``sqrt(n)``.
    weights : (n,) array, optional
        Nonnegative coordinate weights (diagonal of W).  Defaults to ones.

    Instances are frozen and their arrays are marked read-only, so they can
    be shared freely across threads.
    """

    A: np.ndarray
    b: np.ndarray
    epsilon: float
    gamma: float | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        A = _readonly(np.atleast_2d(self.A))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _readonly(np.atleast_1d(self.b)))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if self.gamma is None:
            object.__setattr__(self, "gamma", math.sqrt(A.shape[1]))
        else:
            object.__setattr__(self, "gamma", float(self.gamma))
        if self.weights is None:
            object.__setattr__(self, "weights", _readonly(np.ones(A.shape[1])))
        else:
            object.__setattr__(self, "weights", _readonly(np.atleast_1d(self.weights)))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class SolutionVector:
    """A candidate solution together with the threshold used to count support."""

    x: np.ndarray
    support_threshold: float = DEFAULT_SUPPORT_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.x) > self.support_threshold)

    @property
    def sparsity(self) -> int:
        return int(self.support.size)


def validate(instance: ProblemInstance) -> None:
    """Check all ProblemInstance invariants, raising on the first violation.

    Raises
    ------
    DimensionMismatch
        A's row count differs from len(b), or the weights vector does not
        have length n.
    NonPositiveParameter
        epsilon <= 0 or gamma <= 0.
    NonFiniteData
        Any entry of A, b or weights is NaN or infinite, or a weight is
        negative.
    """
    m, n = instance.A.shape
    if m < 1 or n < 1:
        raise DimensionMismatch(f"matrix must be nonempty, got {m}x{n}")
    if instance.b.shape != (m,):
        raise DimensionMismatch(
            f"A has {m} rows but b has length {instance.b.shape[0]}"
        )
    if instance.weights.shape != (n,):
        raise DimensionMismatch(
            f"A has {n} columns but weights has length {instance.weights.shape[0]}"
        )
    if not instance.epsilon > 0:
        raise NonPositiveParameter(f"epsilon must be > 0, got {instance.epsilon}")
    if not instance.gamma > 0:
        raise NonPositiveParameter(f"gamma must be > 0, got {instance.gamma}")
    if not np.all(np.isfinite(instance.A)):
        raise NonFiniteData("A contains non-finite entries")
    if not np.all(np.isfinite(instance.b)):
        raise NonFiniteData("b contains non-finite entries")
    if not np.all(np.isfinite(instance.weights)):
        raise NonFiniteData("weights contains non-finite entries")
    if np.any(instance.weights < 0):
        raise NonFiniteData("weights must be nonnegative")


def residual_sq(instance: ProblemInstance, x) -> float:
    """Squared residual ||A x - b||^2."""
    r = instance.A @ np.asarray(x, dtype=float) - instance.b
    return float(r @ r)


def objective(
    instance: ProblemInstance,
    x,
    support_threshold: float = DEFAULT_SUPPORT_THRESHOLD,
) -> float:
    """Regularized sparsity objective ||x||_0 + (1/gamma) ||W x||^2.

    ``||x||_0`` counts entries with magnitude strictly above
    ``support_threshold``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({instance.n},)")
    nnz = int(np.count_nonzero(np.abs(x) > support_threshold))
    wx = instance.weights * x
    return nnz + float(wx @ wx) / instance.gamma


def save_instance(instance: ProblemInstance, path) -> None:
    """Write an instance to the JSON interchange format."""
    payload = {
        "m": instance.m,
        "n": instance.n,
        "epsilon": instance.epsilon,
        "gamma": instance.gamma,
        "weights": instance.weights.tolist(),
        "A": instance.A.tolist(),
        "b": instance.b.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_instance(path) -> ProblemInstance:
    """Read an instance from the JSON interchange format.

    Raises DimensionMismatch when the declared "m"/"n" do not match the
    array shapes.
    """
    with open(path) as fh:
        payload = json.load(fh)
    A = np.asarray(payload["A"], dtype=float)
    b = np.asarray(payload["b"], dtype=float)
    if A.shape != (payload["m"], payload["n"]):
        raise DimensionMismatch(
            f"declared shape {(payload['m'], payload['n'])} but A is {A.shape}"
        )
    if b.shape != (payload["m"],):
        raise DimensionMismatch(f"declared m={payload['m']} but b is {b.shape}")
    return ProblemInstance(
        A=A,
        b=b,
        epsilon=payload["epsilon"],
        gamma=payload.get("gamma"),
        weights=payload.get("weights"),
    )


def least_squares_residual_sq(A: np.ndarray, b: np.ndarray) -> float:
    """Smallest achievable squared residual of b against the columns of A."""
    if A.size == 0:
        return float(b @ b)
    coef, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ coef
    return float(r @ r)
