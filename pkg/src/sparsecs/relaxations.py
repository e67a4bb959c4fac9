"""Convex relaxations and node subproblems.

All programs here minimize over the residual ball
``X = {x : ||A x - b||^2 <= eps}``:

* basis pursuit denoising (plain and weighted l1),
* the perspective relaxation with box-relaxed indicators,
* its big-M strengthening,
* the node subproblem used by the branch-and-bound search (a partial
  sparsity pattern fixes some coordinates to zero and charges others as
  selected), in both its collapsed l1 form and its full perspective form,
* the corresponding dual, whose every feasible point is a valid node bound,
* the threshold ``gamma0`` above which the perspective relaxation collapses
  to weighted basis pursuit denoising, and the additive sparsity slack of
  the small-gamma regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core
from .backends import SolverStatus, StatusCode, solve_conic
from .conic import ProgramBuilder
from .core import (
    DegenerateInstance,
    InfeasibleInstance,
    NodeInfeasible,
    ProblemInstance,
    SolutionVector,
    least_squares_residual_sq,
    validate,
)

#: Bracket and iteration cap for the ridge-path bisections.
RIDGE_BRACKET = (1e-10, 1e10)
RIDGE_MAX_ITERS = 200
RIDGE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class RelaxationSolution:
    """(x, z, theta) triple of a perspective-style relaxation."""

    x: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    objective: float
    status: SolverStatus

    def __post_init__(self):
        object.__setattr__(self, "x", core._readonly(self.x))
        object.__setattr__(self, "z", core._readonly(self.z))
        object.__setattr__(self, "theta", core._readonly(self.theta))


@dataclass(frozen=True)
class DualPoint:
    """Feasible point of the node dual together with its objective value."""

    nu: np.ndarray
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "nu", core._readonly(self.nu))


def _check_feasible(instance: ProblemInstance) -> None:
    if least_squares_residual_sq(instance.A, instance.b) > instance.epsilon:
        raise InfeasibleInstance(
            "least-squares residual exceeds epsilon; the residual ball is empty"
        )


def _index_sets(instance, I0, I1):
    I0 = frozenset(int(i) for i in I0)
    I1 = frozenset(int(i) for i in I1)
    n = instance.n
    if I0 & I1:
        raise ValueError("I0 and I1 must be disjoint")
    for i in I0 | I1:
        if not 0 <= i < n:
            raise IndexError(f"index {i} outside [0, {n})")
    free = sorted(set(range(n)) - I0 - I1)
    return I0, I1, free


def _residual_cone(builder: ProgramBuilder, A: np.ndarray, b: np.ndarray,
                   eps: float, x_idx: np.ndarray) -> None:
    """Attach  ||A x - b|| <= sqrt(eps)  via residual variables and one SOC."""
    m = A.shape[0]
    r = builder.add_vars(m)
    for j in range(m):
        cols = np.concatenate([x_idx, [r[j]]])
        coeffs = np.concatenate([A[j], [-1.0]])
        builder.add_eq(cols, coeffs, b[j])
    rho = builder.fix_var(math.sqrt(eps))
    builder.add_cone("soc", np.concatenate([[rho], r]))


def solve_bpd(instance: ProblemInstance, time_limit: float | None = None) -> SolutionVector:
    """Basis pursuit denoising: minimize ||x||_1 over the residual ball.

    The instance's coordinate weights are ignored; see
    :func:`solve_weighted_bpd` for the weighted variant.
    """
    return solve_weighted_bpd(instance, np.ones(instance.n), time_limit)


def solve_weighted_bpd(
    instance: ProblemInstance,
    weights_override,
    time_limit: float | None = None,
) -> SolutionVector:
    """Weighted l1 minimization: minimize ||W x||_1 over the residual ball."""
    validate(instance)
    w = np.asarray(weights_override, dtype=float)
    if w.shape != (instance.n,):
        raise core.DimensionMismatch("weights_override must have length n")
    if np.any(w < 0):
        raise core.NonFiniteData("weights_override must be nonnegative")
    _check_feasible(instance)

    n = instance.n
    b = ProgramBuilder()
    x = b.add_vars(n)
    t = b.add_vars(n, lower=0.0)
    for i in range(n):
        b.add_ineq([x[i], t[i]], [1.0, -1.0], 0.0)
        b.add_ineq([x[i], t[i]], [-1.0, -1.0], 0.0)
    b.set_objective(t, w)
    _residual_cone(b, instance.A, instance.b, instance.epsilon, x)
    point, status = solve_conic(b.build(), time_limit)
    if status.code is StatusCode.INFEASIBLE:
        raise InfeasibleInstance("backend reported an empty residual ball")
    xv = point[x]
    pulled = pull_feasible(instance, xv)
    return SolutionVector(xv if pulled is None else pulled)


def solve_perspective_relaxation(
    instance: ProblemInstance, time_limit: float | None = None
) -> RelaxationSolution:
    """Box relaxation of the conic reformulation.

    minimize  sum z_i + (1/gamma) sum w_i^2 theta_i  subject to the residual
    ball, x_i^2 <= z_i theta_i, 0 <= z <= 1 and theta >= 0.  The optimal
    value is a lower bound on the exact mixed-integer optimum.
    """
    validate(instance)
    _check_feasible(instance)
    prog, idx = _perspective_program(instance)
    return _extract_relaxation(instance, prog, idx, time_limit)


def solve_bigm_relaxation(
    instance: ProblemInstance, M: float, time_limit: float | None = None
) -> RelaxationSolution:
    """Perspective relaxation strengthened with -M z_i <= w_i x_i <= M z_i.

    For M at least the largest weighted coordinate range over the residual
    ball, the bound dominates the plain perspective relaxation.
    """
    if not M > 0:
        raise core.NonPositiveParameter("M must be positive")
    validate(instance)
    _check_feasible(instance)
    prog, idx = _perspective_program(instance, big_m=M)
    return _extract_relaxation(instance, prog, idx, time_limit)


def _perspective_program(instance, I0=frozenset(), I1=frozenset(), big_m=None):
    """Shared emitter for the perspective-style programs.

    Coordinates in I0 are dropped (z_i = x_i = theta_i = 0); coordinates in
    I1 have z_i fixed at 1.  The remaining z are boxed in [0, 1].
    """
    n = instance.n
    w = instance.weights
    keep = [i for i in range(n) if i not in I0]
    b = ProgramBuilder()
    x = b.add_vars(len(keep))
    theta = b.add_vars(len(keep), lower=0.0)
    z = np.empty(len(keep), dtype=np.int64)
    obj_idx, obj_coef = [], []
    one = None
    for pos, i in enumerate(keep):
        if i in I1:
            if one is None:
                one = b.fix_var(1.0)
            z[pos] = one
        else:
            z[pos] = b.add_var(lower=0.0, upper=1.0)
            obj_idx.append(z[pos])
            obj_coef.append(1.0)
        obj_idx.append(theta[pos])
        obj_coef.append(w[i] ** 2 / instance.gamma)
        b.add_cone("rsoc", [z[pos], theta[pos], x[pos]])
        if big_m is not None:
            b.add_ineq([x[pos], z[pos]], [w[i], -big_m], 0.0)
            b.add_ineq([x[pos], z[pos]], [-w[i], -big_m], 0.0)
    b.set_objective(obj_idx, obj_coef, offset=float(len(I1)))
    _residual_cone(b, instance.A[:, keep], instance.b, instance.epsilon, x)
    return b.build(), (keep, x, z, theta, frozenset(I1))


def _extract_relaxation(instance, prog, idx, time_limit) -> RelaxationSolution:
    keep, x_idx, z_idx, theta_idx, I1 = idx
    point, status = solve_conic(prog, time_limit)
    if status.code is StatusCode.INFEASIBLE:
        raise InfeasibleInstance("backend reported an empty residual ball")
    n = instance.n
    x = np.zeros(n)
    z = np.zeros(n)
    theta = np.zeros(n)
    x[keep] = point[x_idx]
    z[keep] = np.clip(point[z_idx], 0.0, 1.0)
    for i in I1:
        z[i] = 1.0
    theta[keep] = np.maximum(point[theta_idx], 0.0)
    obj = status.objective if status.objective is not None else float("nan")
    return RelaxationSolution(x, z, theta, obj, status)


def solve_node_primal(
    instance: ProblemInstance,
    I0,
    I1,
    time_limit: float | None = None,
) -> tuple[SolutionVector, float]:
    """Node subproblem: collapsed bound for the partial pattern (I0, I1).

    minimize  |I1| + (1/gamma) sum_{i in I1} w_i^2 x_i^2
              + (2/sqrt(gamma)) sum_{i free} w_i |x_i|
    subject to the residual ball and x_i = 0 for i in I0.

    The optimal value is a valid lower bound on the exact optimum over all
    binary completions of the pattern, for every gamma > 0.  With
    I0 = I1 = {} this is the root relaxation.

    Raises NodeInfeasible when no point with the required zero pattern
    meets the residual budget, which signals a feasibility cut upstream.
    """
    validate(instance)
    I0, I1, free = _index_sets(instance, I0, I1)
    keep = sorted(set(range(instance.n)) - I0)
    A_keep = instance.A[:, keep]
    if least_squares_residual_sq(A_keep, instance.b) > instance.epsilon:
        raise NodeInfeasible(f"zero set of size {len(I0)} exhausts the budget")

    w = instance.weights
    g = instance.gamma
    b = ProgramBuilder()
    x = b.add_vars(len(keep))
    obj_idx, obj_coef = [], []
    one = None
    for pos, i in enumerate(keep):
        if i in I1:
            if one is None:
                one = b.fix_var(1.0)
            theta = b.add_var(lower=0.0)
            b.add_cone("rsoc", [theta, one, x[pos]])
            obj_idx.append(theta)
            obj_coef.append(w[i] ** 2 / g)
        else:
            t = b.add_var(lower=0.0)
            b.add_ineq([x[pos], t], [1.0, -1.0], 0.0)
            b.add_ineq([x[pos], t], [-1.0, -1.0], 0.0)
            obj_idx.append(t)
            obj_coef.append(2.0 * w[i] / math.sqrt(g))
    b.set_objective(obj_idx, obj_coef, offset=float(len(I1)))
    _residual_cone(b, A_keep, instance.b, instance.epsilon, x)
    point, status = solve_conic(b.build(), time_limit)
    if status.code is StatusCode.INFEASIBLE:
        raise NodeInfeasible("backend reported the node subproblem infeasible")

    x_full = np.zeros(instance.n)
    x_full[keep] = point[x]
    lower = status.objective if status.objective is not None else float("nan")
    return SolutionVector(x_full), float(lower)


def solve_node_perspective(
    instance: ProblemInstance,
    I0,
    I1,
    time_limit: float | None = None,
) -> RelaxationSolution:
    """Perspective relaxation of the node subproblem (the strict-bounds path).

    Identical feasible region to :func:`solve_node_primal` but keeps the
    boxed indicator variables of the free coordinates, so the value equals
    the true box relaxation even when gamma is below the collapse threshold.
    """
    validate(instance)
    I0, I1, _ = _index_sets(instance, I0, I1)
    keep = sorted(set(range(instance.n)) - I0)
    if least_squares_residual_sq(instance.A[:, keep], instance.b) > instance.epsilon:
        raise NodeInfeasible(f"zero set of size {len(I0)} exhausts the budget")
    prog, idx = _perspective_program(instance, I0=I0, I1=I1)
    sol = _extract_relaxation(instance, prog, idx, time_limit)
    if sol.status.code is StatusCode.INFEASIBLE:
        raise NodeInfeasible("backend reported the node subproblem infeasible")
    return sol


def solve_node_dual(
    instance: ProblemInstance,
    I0,
    I1,
    time_limit: float | None = None,
) -> DualPoint:
    """Dual of the node subproblem.

    maximize  |I1| + b @ nu - sqrt(eps) ||nu||
              - (gamma/4) sum_{i in I1} (A_i @ nu)^2 / w_i^2
    subject to |A_i @ nu| <= 2 w_i / sqrt(gamma) for free i.

    nu = 0 is always feasible, so any returned point yields a valid node
    lower bound; at optimality the value matches the primal (strong
    duality).  The dual objective is re-evaluated from the returned nu so
    the reported bound is exactly the value of a feasible point.
    """
    validate(instance)
    I0, I1, free = _index_sets(instance, I0, I1)
    m = instance.m
    w = instance.weights
    g = instance.gamma
    A = instance.A

    b = ProgramBuilder()
    nu = b.add_vars(m)
    tnorm = b.add_var(lower=0.0)
    b.add_cone("soc", np.concatenate([[tnorm], nu]))
    obj_idx = list(nu) + [tnorm]
    obj_coef = list(-instance.b) + [math.sqrt(instance.epsilon)]
    I1_list = sorted(I1)
    if I1_list:
        one = b.fix_var(1.0)
        q = b.add_var(lower=0.0)
        p = b.add_vars(len(I1_list))
        for pos, i in enumerate(I1_list):
            if w[i] == 0.0:
                # quadratic term degenerates; the dual needs A_i @ nu = 0
                b.add_eq(nu, A[:, i], 0.0)
                b.add_eq([p[pos]], [1.0], 0.0)
            else:
                cols = np.concatenate([nu, [p[pos]]])
                coeffs = np.concatenate([A[:, i] / w[i], [-1.0]])
                b.add_eq(cols, coeffs, 0.0)
        b.add_cone("rsoc", np.concatenate([[q, one], p]))
        obj_idx.append(q)
        obj_coef.append(g / 4.0)
    for i in free:
        bound = 2.0 * w[i] / math.sqrt(g)
        if w[i] == 0.0:
            b.add_eq(nu, A[:, i], 0.0)
        else:
            b.add_ineq(nu, A[:, i], bound)
            b.add_ineq(nu, -A[:, i], bound)
    b.set_objective(obj_idx, obj_coef)
    point, status = solve_conic(b.build(), time_limit)

    nu_val = point[nu]
    if not np.all(np.isfinite(nu_val)):
        nu_val = np.zeros(m)
    return DualPoint(nu_val, node_dual_objective(instance, I0, I1, nu_val))


def node_dual_objective(instance: ProblemInstance, I0, I1, nu) -> float:
    """Evaluate the node dual objective at an arbitrary nu."""
    nu = np.asarray(nu, dtype=float)
    w = instance.weights
    quad = 0.0
    for i in I1:
        ai_nu = float(instance.A[:, i] @ nu)
        if w[i] == 0.0:
            if abs(ai_nu) > 1e-9:
                return -math.inf
            continue
        quad += (ai_nu / w[i]) ** 2
    return (
        len(frozenset(I1))
        + float(instance.b @ nu)
        - math.sqrt(instance.epsilon) * float(np.linalg.norm(nu))
        - instance.gamma / 4.0 * quad
    )


def compute_gamma0(instance: ProblemInstance) -> float:
    """Collapse threshold: max over the residual ball of ||W x||_inf, squared.

    Computed by 2n conic solves (maximize +-w_i x_i over the ball).  When
    the ball is unbounded along some coordinate with a positive weight the
    threshold is infinite; the +inf sentinel is returned rather than an
    error, and callers must handle it.  Coordinate boundedness is decided
    from the null space of A, and the conic solves are pinned to the row
    space so the feasible region handed to the backend is compact.
    """
    validate(instance)
    _check_feasible(instance)
    w = instance.weights
    _, sv, Vt = np.linalg.svd(instance.A)
    rank = int(np.sum(sv > (sv[0] * 1e-10 if sv.size else 0.0)))
    null_rows = Vt[rank:]

    best = 0.0
    for i in range(instance.n):
        if w[i] == 0.0:
            continue
        if null_rows.size and np.max(np.abs(null_rows[:, i])) > 1e-8:
            return math.inf
        for sign in (-1.0, 1.0):
            b = ProgramBuilder()
            x = b.add_vars(instance.n)
            b.set_objective([x[i]], [sign * w[i]])
            for row in null_rows:
                b.add_eq(x, row, 0.0)
            _residual_cone(b, instance.A, instance.b, instance.epsilon, x)
            point, status = solve_conic(b.build())
            if status.objective is None:
                raise core.BackendFailure(
                    f"coordinate solve failed: {status.detail}"
                )
            best = max(best, abs(status.objective))
    return best**2


def ridge_point(A: np.ndarray, b: np.ndarray, lam: float,
                weights: np.ndarray | None = None) -> np.ndarray:
    """Solve  (diag(w^2)/lam + A^T A) x = A^T b."""
    n = A.shape[1]
    wsq = np.ones(n) if weights is None else np.asarray(weights) ** 2
    H = A.T @ A + np.diag(wsq / lam)
    try:
        return np.linalg.solve(H, A.T @ b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, A.T @ b, rcond=None)[0]


def min_weighted_norm_on_ball(
    A: np.ndarray,
    b: np.ndarray,
    eps: float,
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize ||W x||^2 over the residual ball by ridge-path bisection.

    The path x(lam) = (diag(w^2)/lam + A^T A)^-1 A^T b has residual
    decreasing in lam; bisection finds the multiplier where the residual
    meets eps.  Returns the point and its squared weighted norm.

    Assumes the nondegenerate case ||b||^2 > eps (otherwise x = 0 is
    optimal) and a feasible ball.
    """
    if float(b @ b) <= eps:
        return np.zeros(A.shape[1]), 0.0
    if least_squares_residual_sq(A, b) > eps:
        raise InfeasibleInstance("residual ball is empty on this column set")
    w = np.ones(A.shape[1]) if weights is None else np.asarray(weights, dtype=float)

    def resid(x):
        r = A @ x - b
        return float(r @ r)

    # Bisection keeps the returned point on the feasible side of the
    # boundary, so downstream feasibility checks never see a violation.
    tol = RIDGE_RESIDUAL_TOL * max(1.0, eps)
    lo, hi = RIDGE_BRACKET
    x_feas = ridge_point(A, b, hi, w)
    for _ in range(RIDGE_MAX_ITERS):
        if 0.0 <= eps - resid(x_feas) <= tol:
            break
        mid = math.sqrt(lo * hi)
        x = ridge_point(A, b, mid, w)
        if resid(x) > eps:
            lo = mid
        else:
            hi = mid
            x_feas = x
    wx = w * x_feas
    return x_feas, float(wx @ wx)


def pull_feasible(instance: ProblemInstance, x) -> np.ndarray | None:
    """Nudge a boundary point strictly inside the residual ball.

    Backend solutions sit on the residual boundary up to solver noise; this
    walks the minimal distance along the segment toward the least-squares
    fit on the point's support, which restores ``||A x - b||^2 <= eps``
    while moving the objective by a vanishing amount.  Returns None when
    the support admits no feasible point at all.
    """
    x = np.asarray(x, dtype=float)
    u = instance.A @ x - instance.b
    eps = instance.epsilon
    if float(u @ u) <= eps:
        return x
    support = np.flatnonzero(x != 0.0)
    cols = instance.A[:, support]
    coef, _, _, _ = np.linalg.lstsq(cols, instance.b, rcond=None)
    v = cols @ coef - instance.b
    if float(v @ v) > eps:
        return None
    # ||u + t (v - u)||^2 = target, smallest root in [0, 1]; the target sits
    # a hair inside the ball so float rounding cannot tip the result back out.
    target = eps * (1.0 - 1e-11)
    d = v - u
    a = float(d @ d)
    bq = float(u @ d)
    cq = float(u @ u) - target
    if a <= 0.0:
        return None
    disc = max(bq * bq - a * cq, 0.0)
    t = (-bq - math.sqrt(disc)) / a
    if not 0.0 <= t <= 1.0:
        t = min(max((-bq + math.sqrt(disc)) / a, 0.0), 1.0)
    out = x.copy()
    out[support] = (1.0 - t) * x[support] + t * coef
    r = instance.A @ out - instance.b
    if float(r @ r) > eps:
        out[support] = coef  # fall back to the least-squares endpoint
    return out


def theorem2_bound(instance: ProblemInstance, xtilde_norm_sq: float) -> float:
    """Additive sparsity slack of the small-gamma regime.

    Returns (1/gamma) (||xtilde||^2 - ||x(lam_eps)||^2) where x(lam_eps) is
    the ridge point whose residual equals eps (found by bisection) and
    ||xtilde||^2 is the squared norm of a minimum-norm sparsest solution,
    supplied by the caller (computable only at oracle scale).

    Raises DegenerateInstance when ||b||^2 <= eps (the ball contains zero).
    """
    validate(instance)
    if float(instance.b @ instance.b) <= instance.epsilon:
        raise DegenerateInstance("zero vector already feasible")
    _check_feasible(instance)
    _, norm_sq = min_weighted_norm_on_ball(
        instance.A, instance.b, instance.epsilon, weights=None
    )
    return (float(xtilde_norm_sq) - norm_sq) / instance.gamma
