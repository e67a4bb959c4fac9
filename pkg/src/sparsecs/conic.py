"""Backend-neutral description of the conic programs this library emits.

A :class:`ConicProgram` is a plain container: minimize a linear objective
over affine equality/inequality rows, variable bounds, and a list of cone
memberships on subsets of the variables.  Only the cone families actually
emitted by this package are supported:

``soc``
    ``x[idx[0]] >= || x[idx[1:]] ||_2``.
``rsoc``
    ``x[idx[0]] * x[idx[1]] >= || x[idx[2:]] ||_2^2`` with the first two
    entries nonnegative (no factor 2 in this convention).
``nonneg``
    ``x[idx] >= 0`` elementwise.
``psd``
    ``idx`` lists the lower triangle (row-major) of a symmetric ``dim x dim``
    matrix that must be positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core import DimensionMismatch

CONE_KINDS = ("soc", "rsoc", "nonneg", "psd")


@dataclass(frozen=True)
class ConeMembership:
    kind: str
    indices: np.ndarray
    dim: int = 0  # matrix dimension, psd only

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)


@dataclass
class ConicProgram:
    """minimize  objective @ x + offset  subject to rows, bounds and cones."""

    num_vars: int
    objective: np.ndarray
    offset: float = 0.0
    eq_lhs: sparse.csr_matrix | None = None
    eq_rhs: np.ndarray | None = None
    ineq_lhs: sparse.csr_matrix | None = None
    ineq_rhs: np.ndarray | None = None
    lower: np.ndarray | None = None  # -inf where absent
    upper: np.ndarray | None = None  # +inf where absent
    cones: list[ConeMembership] = field(default_factory=list)

    def check(self) -> None:
        """Validate internal consistency (indices in range, sane dimensions)."""
        if self.objective.shape != (self.num_vars,):
            raise DimensionMismatch("objective length != num_vars")
        for name in ("eq", "ineq"):
            lhs = getattr(self, f"{name}_lhs")
            rhs = getattr(self, f"{name}_rhs")
            if (lhs is None) != (rhs is None):
                raise DimensionMismatch(f"{name} rows need both lhs and rhs")
            if lhs is not None:
                if lhs.shape != (rhs.shape[0], self.num_vars):
                    raise DimensionMismatch(f"{name} row shape mismatch")
        for cone in self.cones:
            if cone.kind not in CONE_KINDS:
                raise DimensionMismatch(f"unknown cone kind {cone.kind!r}")
            if cone.indices.size == 0:
                raise DimensionMismatch("cone with no variables")
            if cone.indices.min() < 0 or cone.indices.max() >= self.num_vars:
                raise DimensionMismatch("cone references a variable out of range")
            if cone.kind == "rsoc" and cone.indices.size < 2:
                raise DimensionMismatch("rsoc cone needs at least two variables")
            if cone.kind == "psd":
                expect = cone.dim * (cone.dim + 1) // 2
                if cone.indices.size != expect:
                    raise DimensionMismatch(
                        f"psd cone of dim {cone.dim} needs {expect} entries, "
                        f"got {cone.indices.size}"
                    )

    def violation(self, x: np.ndarray) -> float:
        """Worst constraint violation of a point, in the natural units.

        Used to accept or downgrade backend results; PSD blocks contribute
        the magnitude of the most negative eigenvalue.
        """
        worst = 0.0
        if self.eq_lhs is not None and self.eq_rhs is not None:
            r = self.eq_lhs @ x - self.eq_rhs
            if r.size:
                worst = max(worst, float(np.max(np.abs(r))))
        if self.ineq_lhs is not None and self.ineq_rhs is not None:
            r = self.ineq_lhs @ x - self.ineq_rhs
            if r.size:
                worst = max(worst, float(np.max(r)))
        if self.lower is not None:
            finite = np.isfinite(self.lower)
            if finite.any():
                worst = max(worst, float(np.max(self.lower[finite] - x[finite])))
        if self.upper is not None:
            finite = np.isfinite(self.upper)
            if finite.any():
                worst = max(worst, float(np.max(x[finite] - self.upper[finite])))
        for cone in self.cones:
            v = x[cone.indices]
            if cone.kind == "soc":
                worst = max(worst, float(np.linalg.norm(v[1:]) - v[0]))
            elif cone.kind == "rsoc":
                worst = max(worst, float(v[2:] @ v[2:] - v[0] * v[1]))
                worst = max(worst, float(-v[0]), float(-v[1]))
            elif cone.kind == "nonneg":
                worst = max(worst, float(np.max(-v)))
            elif cone.kind == "psd":
                S = unpack_symmetric(v, cone.dim)
                worst = max(worst, float(-np.linalg.eigvalsh(S)[0]))
        return worst


def tri_index(i: int, j: int) -> int:
    """Position of entry (i, j), i >= j, in the row-major lower triangle."""
    if i < j:
        i, j = j, i
    return i * (i + 1) // 2 + j


def unpack_symmetric(tri: np.ndarray, dim: int) -> np.ndarray:
    """Rebuild the full symmetric matrix from its packed lower triangle."""
    S = np.zeros((dim, dim))
    k = 0
    for i in range(dim):
        for j in range(i + 1):
            S[i, j] = S[j, i] = tri[k]
            k += 1
    return S


def pack_symmetric(S: np.ndarray) -> np.ndarray:
    """Packed row-major lower triangle of a symmetric matrix."""
    dim = S.shape[0]
    return np.array([S[i, j] for i in range(dim) for j in range(i + 1)])


class ProgramBuilder:
    """Incrementally assemble a ConicProgram.

    Rows are accumulated in COO form and converted to CSR once at build
    time, which keeps per-node assembly cheap inside the search loop.
    """

    def __init__(self):
        self._num_vars = 0
        self._obj: list[tuple[int, float]] = []
        self._offset = 0.0
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._eq_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._ineq_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._cones: list[ConeMembership] = []

    def add_vars(self, count: int, lower=-np.inf, upper=np.inf) -> np.ndarray:
        idx = np.arange(self._num_vars, self._num_vars + count, dtype=np.int64)
        self._num_vars += count
        self._lower.extend([lower] * count)
        self._upper.extend([upper] * count)
        return idx

    def add_var(self, lower=-np.inf, upper=np.inf) -> int:
        return int(self.add_vars(1, lower, upper)[0])

    def fix_var(self, value: float) -> int:
        """A variable pinned to a constant through an equality row."""
        idx = self.add_var()
        self.add_eq([idx], [1.0], value)
        return idx

    def set_objective(self, indices, coeffs, offset: float = 0.0) -> None:
        self._obj.extend(zip(np.asarray(indices, dtype=np.int64), coeffs))
        self._offset += offset

    def add_eq(self, indices, coeffs, rhs: float) -> None:
        self._eq_rows.append(
            (np.asarray(indices, dtype=np.int64), np.asarray(coeffs, dtype=float), rhs)
        )

    def add_ineq(self, indices, coeffs, rhs: float) -> None:
        """Row  sum(coeffs * x[indices]) <= rhs."""
        self._ineq_rows.append(
            (np.asarray(indices, dtype=np.int64), np.asarray(coeffs, dtype=float), rhs)
        )

    def add_eq_block(self, lhs: np.ndarray, col_indices, rhs: np.ndarray) -> None:
        """Dense block of equality rows over a common column subset."""
        cols = np.asarray(col_indices, dtype=np.int64)
        for r in range(lhs.shape[0]):
            self._eq_rows.append((cols, np.asarray(lhs[r], dtype=float), float(rhs[r])))

    def add_cone(self, kind: str, indices, dim: int = 0) -> None:
        self._cones.append(ConeMembership(kind, np.asarray(indices), dim))

    def _assemble(self, rows):
        if not rows:
            return None, None
        data, ri, ci, rhs = [], [], [], []
        for k, (cols, vals, r) in enumerate(rows):
            ri.extend([k] * len(cols))
            ci.extend(cols)
            data.extend(vals)
            rhs.append(r)
        lhs = sparse.csr_matrix(
            (data, (ri, ci)), shape=(len(rows), self._num_vars)
        )
        return lhs, np.asarray(rhs, dtype=float)

    def build(self) -> ConicProgram:
        obj = np.zeros(self._num_vars)
        for idx, c in self._obj:
            obj[idx] += c
        eq_lhs, eq_rhs = self._assemble(self._eq_rows)
        ineq_lhs, ineq_rhs = self._assemble(self._ineq_rows)
        prog = ConicProgram(
            num_vars=self._num_vars,
            objective=obj,
            offset=self._offset,
            eq_lhs=eq_lhs,
            eq_rhs=eq_rhs,
            ineq_lhs=ineq_lhs,
            ineq_rhs=ineq_rhs,
            lower=np.asarray(self._lower, dtype=float),
            upper=np.asarray(self._upper, dtype=float),
            cones=self._cones,
        )
        prog.check()
        return prog
