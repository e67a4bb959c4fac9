"""Pluggable conic solver backends.

Programs are handed to a backend as a :class:`~sparsecs.conic.ConicProgram`;
the backend returns a point and a :class:`SolverStatus`.  Backends are
instantiated per call, so concurrent solves never share solver state.  The
environment variable ``SPARSECS_SOLVER`` selects the backend when more than
one is registered.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .conic import ConicProgram
from .core import BackendFailure

#: Tolerance requested from the backend.
REQUEST_TOL = 1e-8
#: Worst constraint violation accepted before a result is downgraded to
#: NumericLimit.
ACCEPT_TOL = 1e-6


class StatusCode(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERIC_LIMIT = "NumericLimit"
    TIME_LIMIT = "TimeLimit"


@dataclass(frozen=True)
class SolverStatus:
    code: StatusCode
    objective: float | None = None
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    detail: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.code is StatusCode.OPTIMAL


class ClarabelBackend:
    """Translate a ConicProgram into Clarabel's  A x + s = b,  s in K  form.

    Slack rows are emitted in the order zero / nonnegative / SOC / PSD.
    Rotated cones are lowered to plain second-order cones via
    ``a b >= ||u||^2  <=>  ||(2u, a - b)|| <= a + b``, which needs no
    auxiliary variables.  PSD blocks use Clarabel's scaled-triangle
    convention (off-diagonal entries times sqrt(2)).
    """

    name = "clarabel"

    def solve(self, program: ConicProgram, time_limit: float | None = None):
        import clarabel

        n = program.num_vars
        rows = []  # (col_indices, coeffs, rhs)
        cones = []

        n_eq = 0
        if program.eq_lhs is not None:
            n_eq = program.eq_lhs.shape[0]
            cones.append(clarabel.ZeroConeT(n_eq))

        nonneg_rows = []
        if program.ineq_lhs is not None:
            nonneg_rows.append("ineq")
        lo_idx = up_idx = np.empty(0, dtype=np.int64)
        if program.lower is not None:
            lo_idx = np.flatnonzero(np.isfinite(program.lower))
        if program.upper is not None:
            up_idx = np.flatnonzero(np.isfinite(program.upper))
        nonneg_cones = [c for c in program.cones if c.kind == "nonneg"]
        n_nonneg = (
            (program.ineq_lhs.shape[0] if program.ineq_lhs is not None else 0)
            + lo_idx.size
            + up_idx.size
            + sum(c.indices.size for c in nonneg_cones)
        )
        if n_nonneg:
            cones.append(clarabel.NonnegativeConeT(n_nonneg))

        blocks = []
        rhs_parts = []
        if program.eq_lhs is not None:
            blocks.append(program.eq_lhs)
            rhs_parts.append(program.eq_rhs)
        if program.ineq_lhs is not None:
            blocks.append(program.ineq_lhs)
            rhs_parts.append(program.ineq_rhs)
        if lo_idx.size:
            # x >= lo  ->  -x + s = -lo
            blocks.append(
                sparse.csr_matrix(
                    (-np.ones(lo_idx.size), (np.arange(lo_idx.size), lo_idx)),
                    shape=(lo_idx.size, n),
                )
            )
            rhs_parts.append(-program.lower[lo_idx])
        if up_idx.size:
            blocks.append(
                sparse.csr_matrix(
                    (np.ones(up_idx.size), (np.arange(up_idx.size), up_idx)),
                    shape=(up_idx.size, n),
                )
            )
            rhs_parts.append(program.upper[up_idx])
        for cone in nonneg_cones:
            k = cone.indices.size
            blocks.append(
                sparse.csr_matrix(
                    (-np.ones(k), (np.arange(k), cone.indices)), shape=(k, n)
                )
            )
            rhs_parts.append(np.zeros(k))

        for cone in program.cones:
            if cone.kind == "soc":
                k = cone.indices.size
                blocks.append(
                    sparse.csr_matrix(
                        (-np.ones(k), (np.arange(k), cone.indices)), shape=(k, n)
                    )
                )
                rhs_parts.append(np.zeros(k))
                cones.append(clarabel.SecondOrderConeT(k))
            elif cone.kind == "rsoc":
                a, bb = cone.indices[0], cone.indices[1]
                tail = cone.indices[2:]
                k = tail.size + 2
                ri = [0, 0, 1, 1] + list(range(2, k))
                ci = [a, bb, a, bb] + list(tail)
                vals = [-1.0, -1.0, -1.0, 1.0] + [-2.0] * tail.size
                blocks.append(sparse.csr_matrix((vals, (ri, ci)), shape=(k, n)))
                rhs_parts.append(np.zeros(k))
                cones.append(clarabel.SecondOrderConeT(k))
        for cone in program.cones:
            if cone.kind == "psd":
                k = cone.indices.size
                scale = np.ones(k)
                pos = 0
                for i in range(cone.dim):
                    for j in range(i + 1):
                        if i != j:
                            scale[pos] = np.sqrt(2.0)
                        pos += 1
                blocks.append(
                    sparse.csr_matrix(
                        (-scale, (np.arange(k), cone.indices)), shape=(k, n)
                    )
                )
                rhs_parts.append(np.zeros(k))
                cones.append(clarabel.PSDTriangleConeT(cone.dim))

        A = sparse.vstack(blocks, format="csc") if blocks else sparse.csc_matrix((0, n))
        rhs = np.concatenate(rhs_parts) if rhs_parts else np.zeros(0)
        P = sparse.csc_matrix((n, n))

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = REQUEST_TOL
        settings.tol_gap_abs = REQUEST_TOL
        settings.tol_gap_rel = REQUEST_TOL
        if time_limit is not None:
            settings.time_limit = max(float(time_limit), 1e-3)

        try:
            solver = clarabel.DefaultSolver(P, program.objective, A, rhs, cones, settings)
            sol = solver.solve()
        except BaseException as exc:  # the binding raises pyo3 panics
            raise BackendFailure(str(exc)) from exc

        x = np.asarray(sol.x, dtype=float)
        status = str(sol.status)
        prim = float(sol.r_prim) if np.isfinite(sol.r_prim) else float("nan")
        dual = float(sol.r_dual) if np.isfinite(sol.r_dual) else float("nan")
        obj = float(sol.obj_val) + program.offset

        if status == "Solved":
            return x, StatusCode.OPTIMAL, obj, prim, dual, ""
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return x, StatusCode.INFEASIBLE, None, prim, dual, status
        if status == "MaxTime":
            return x, StatusCode.TIME_LIMIT, obj, prim, dual, status
        # AlmostSolved, MaxIterations, NumericalError, InsufficientProgress,
        # DualInfeasible (unbounded) and anything else land here.
        return x, StatusCode.NUMERIC_LIMIT, obj, prim, dual, status


_BACKENDS = {ClarabelBackend.name: ClarabelBackend}


def register_backend(cls) -> None:
    _BACKENDS[cls.name] = cls


def get_backend(name: str | None = None):
    name = name or os.environ.get("SPARSECS_SOLVER", ClarabelBackend.name)
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise BackendFailure(
            f"unknown solver backend {name!r}; available: {sorted(_BACKENDS)}"
        ) from None


def solve_conic(
    program: ConicProgram,
    time_limit: float | None = None,
    backend: str | None = None,
) -> tuple[np.ndarray, SolverStatus]:
    """Solve a ConicProgram, returning the point and a SolverStatus.

    An Optimal status guarantees the returned point violates no constraint
    by more than ``ACCEPT_TOL``; looser backend answers are downgraded to
    NumericLimit.  Backend breakdowns surface as NumericLimit with the
    failure message in ``detail``.
    """
    program.check()
    try:
        x, code, obj, prim, dual, detail = get_backend(backend).solve(
            program, time_limit
        )
    except BackendFailure as exc:
        return (
            np.full(program.num_vars, np.nan),
            SolverStatus(StatusCode.NUMERIC_LIMIT, None, detail=str(exc)),
        )
    if code is StatusCode.OPTIMAL:
        viol = program.violation(x)
        if viol > ACCEPT_TOL:
            code = StatusCode.NUMERIC_LIMIT
            detail = f"violation {viol:.2e} above acceptance tolerance"
        prim = viol
    return x, SolverStatus(code, obj, prim, dual, detail)
