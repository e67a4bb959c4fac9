import numpy as np
import pytest

from sparsecs.backends import StatusCode, solve_conic
from sparsecs.conic import (
    ConeMembership,
    ProgramBuilder,
    pack_symmetric,
    tri_index,
    unpack_symmetric,
)
from sparsecs.core import DimensionMismatch


def test_linear_one_variable():
    b = ProgramBuilder()
    x = b.add_var(lower=3.0)
    b.set_objective([x], [1.0])
    point, status = solve_conic(b.build())
    assert status.code is StatusCode.OPTIMAL
    assert point[x] == pytest.approx(3.0, abs=1e-7)


def test_infeasible_box():
    b = ProgramBuilder()
    x = b.add_var(lower=1.0, upper=0.0)
    b.set_objective([x], [0.0])
    _, status = solve_conic(b.build())
    assert status.code is StatusCode.INFEASIBLE


def test_soc_geometry():
    b = ProgramBuilder()
    t = b.add_var()
    u = b.add_vars(2)
    b.add_eq([u[0]], [1.0], 1.0)
    b.add_eq([u[1]], [1.0], 1.0)
    b.set_objective([t], [1.0])
    b.add_cone("soc", [t, *u])
    point, status = solve_conic(b.build())
    assert status.code is StatusCode.OPTIMAL
    assert point[t] == pytest.approx(np.sqrt(2), abs=1e-7)


def test_rsoc_square():
    # minimize a subject to a * 1 >= 2^2
    b = ProgramBuilder()
    a = b.add_var()
    one = b.fix_var(1.0)
    u = b.add_var()
    b.add_eq([u], [1.0], 2.0)
    b.set_objective([a], [1.0])
    b.add_cone("rsoc", [a, one, u])
    point, status = solve_conic(b.build())
    assert status.code is StatusCode.OPTIMAL
    assert point[a] == pytest.approx(4.0, abs=1e-6)


def test_nonneg_cone():
    b = ProgramBuilder()
    x = b.add_var()
    b.set_objective([x], [1.0])
    b.add_ineq([x], [-1.0], 1.0)  # x >= -1
    b.add_cone("nonneg", [x])
    point, status = solve_conic(b.build())
    assert status.code is StatusCode.OPTIMAL
    assert point[x] == pytest.approx(0.0, abs=1e-7)


def test_psd_completion():
    # minimize trace with an off-diagonal entry pinned
    b = ProgramBuilder()
    tri = b.add_vars(3)
    b.add_eq([tri[1]], [1.0], 3.0)
    b.set_objective([tri[0], tri[2]], [1.0, 1.0])
    b.add_cone("psd", tri, dim=2)
    point, status = solve_conic(b.build())
    assert status.code is StatusCode.OPTIMAL
    assert point[tri[0]] + point[tri[2]] == pytest.approx(6.0, abs=1e-6)


def test_optimal_point_within_tolerance():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(4, 6))
    bb = rng.normal(size=4)
    b = ProgramBuilder()
    x = b.add_vars(6)
    t = b.add_vars(6, lower=0.0)
    for i in range(6):
        b.add_ineq([x[i], t[i]], [1.0, -1.0], 0.0)
        b.add_ineq([x[i], t[i]], [-1.0, -1.0], 0.0)
    b.set_objective(t, np.ones(6))
    r = b.add_vars(4)
    for j in range(4):
        b.add_eq(list(x) + [r[j]], list(A[j]) + [-1.0], bb[j])
    rho = b.fix_var(1.0)
    b.add_cone("soc", [rho, *r])
    prog = b.build()
    point, status = solve_conic(prog)
    assert status.code is StatusCode.OPTIMAL
    assert prog.violation(point) <= 1e-6
    assert status.primal_residual <= 1e-6


def test_program_check_rejects_bad_cone_index():
    b = ProgramBuilder()
    b.add_var()
    prog = b.build()
    prog.cones.append(ConeMembership("soc", [0, 5]))
    with pytest.raises(DimensionMismatch):
        prog.check()


def test_program_check_rejects_bad_psd_size():
    b = ProgramBuilder()
    idx = b.add_vars(4)
    prog = b.build()
    prog.cones.append(ConeMembership("psd", idx, dim=2))
    with pytest.raises(DimensionMismatch):
        prog.check()


def test_tri_index_and_packing():
    S = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    tri = pack_symmetric(S)
    assert np.array_equal(tri, np.array([1, 2, 3, 4, 5, 6.0]))
    assert np.array_equal(unpack_symmetric(tri, 3), S)
    assert tri[tri_index(2, 1)] == 5.0
    assert tri_index(1, 2) == tri_index(2, 1)


def test_time_limit_status():
    # A deliberately large program with a microscopic budget trips MaxTime.
    rng = np.random.default_rng(0)
    n = 300
    A = rng.normal(size=(n, n))
    b = ProgramBuilder()
    x = b.add_vars(n)
    t = b.add_vars(n, lower=0.0)
    for i in range(n):
        b.add_ineq([x[i], t[i]], [1.0, -1.0], 0.0)
        b.add_ineq([x[i], t[i]], [-1.0, -1.0], 0.0)
    b.set_objective(t, np.ones(n))
    r = b.add_vars(n)
    for j in range(n):
        b.add_eq(list(x) + [r[j]], list(A[j]) + [-1.0], 1.0)
    rho = b.fix_var(10.0)
    b.add_cone("soc", [rho, *r])
    _, status = solve_conic(b.build(), time_limit=1e-3)
    assert status.code in (StatusCode.TIME_LIMIT, StatusCode.OPTIMAL,
                           StatusCode.NUMERIC_LIMIT)
