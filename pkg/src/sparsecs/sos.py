"""Degree-1 sum-of-squares semidefinite lower bound.

The exact problem is written as polynomial optimization over the
semialgebraic set

    Omega = { (z, x) : eps - ||A x - b||^2 >= 0,
                       x_i z_i - x_i = 0,  z_i^2 - z_i = 0 },

and lower-bounded by the largest ``lam`` for which the objective minus
``lam`` lies in the degree-1 quadratic module of Omega:

    f(z, x) - lam = s0(z, x) + tau (eps - ||A x - b||^2)
                    + sum_i t_i (x_i z_i - x_i) + sum_i r_i (z_i^2 - z_i)

with s0 a quadratic SOS polynomial (Gram matrix S over the monomial basis
``[x_1..x_n, z_1..z_n, 1]``, constant last), tau >= 0 a scalar SOS of
degree 0, and t, r free scalars.  Matching coefficients over the degree-2
monomials turns this into an SDP with a (2n+1)-dimensional PSD block; any
feasible certificate proves its ``lam`` is a valid lower bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import core
from .backends import SolverStatus, StatusCode, solve_conic
from .conic import ProgramBuilder, pack_symmetric, tri_index, unpack_symmetric
from .core import DimensionMismatch, ProblemInstance, ProblemTooLarge, validate

#: PSD blocks above this monomial-basis size are refused.
DEFAULT_MAX_N = 200
#: Eigenvalue slack accepted when checking the Gram matrix.
PSD_TOL = 1e-7
#: Per-monomial slack accepted when checking the polynomial identity.
IDENTITY_TOL = 1e-6


@dataclass(frozen=True)
class SosCertificate:
    """Multipliers witnessing  f - lam  in the degree-1 quadratic module."""

    lam: float
    S: np.ndarray  # (2n+1, 2n+1) Gram matrix of s0
    tau: float
    t: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", core._readonly(np.atleast_2d(self.S)))
        object.__setattr__(self, "t", core._readonly(np.atleast_1d(self.t)))
        object.__setattr__(self, "r", core._readonly(np.atleast_1d(self.r)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "lambda": self.lam,
                "tau": self.tau,
                "t": self.t.tolist(),
                "r": self.r.tolist(),
                "S": self.S.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SosCertificate":
        d = json.loads(text)
        return cls(
            lam=float(d["lambda"]),
            S=np.asarray(d["S"], dtype=float),
            tau=float(d["tau"]),
            t=np.asarray(d["t"], dtype=float),
            r=np.asarray(d["r"], dtype=float),
        )


def _identity_residuals(instance: ProblemInstance, cert: SosCertificate) -> np.ndarray:
    """Coefficient mismatches of the quadratic-module identity.

    One entry per degree-<=2 monomial; all must vanish for the identity to
    hold.  Pure linear algebra, independent of any solver.
    """
    n = instance.n
    G = instance.A.T @ instance.A
    h = instance.A.T @ instance.b
    beta = float(instance.b @ instance.b)
    w = instance.weights
    S = cert.S
    c = 2 * n
    res = []
    for i in range(n):
        for j in range(i):
            res.append(2 * S[i, j] - 2 * cert.tau * G[i, j])  # x_i x_j
            res.append(2 * S[n + i, n + j])  # z_i z_j
        res.append(S[i, i] - cert.tau * G[i, i] - w[i] ** 2 / instance.gamma)  # x_i^2
        res.append(S[n + i, n + i] + cert.r[i])  # z_i^2
        for j in range(n):  # x_i z_j
            coeff = 2 * S[i, n + j]
            if i == j:
                coeff += cert.t[i]
            res.append(coeff)
        res.append(2 * S[c, i] + 2 * cert.tau * h[i] - cert.t[i])  # x_i
        res.append(2 * S[c, n + i] - cert.r[i] - 1.0)  # z_i
    res.append(S[c, c] + cert.tau * (instance.epsilon - beta) + cert.lam)  # constant
    return np.asarray(res)


def verify_certificate(instance: ProblemInstance, cert: SosCertificate) -> bool:
    """Offline check of a certificate: Gram PSD and identity coefficient-wise."""
    validate(instance)
    n = instance.n
    if cert.S.shape != (2 * n + 1, 2 * n + 1):
        raise DimensionMismatch(
            f"S must be {(2 * n + 1, 2 * n + 1)}, got {cert.S.shape}"
        )
    if cert.t.shape != (n,) or cert.r.shape != (n,):
        raise DimensionMismatch("t and r must have length n")
    if cert.tau < -PSD_TOL:
        return False
    if float(np.linalg.eigvalsh(cert.S)[0]) < -PSD_TOL:
        return False
    return bool(np.max(np.abs(_identity_residuals(instance, cert))) <= IDENTITY_TOL)


def solve_sos_d1(
    instance: ProblemInstance,
    time_limit: float | None = None,
    max_n: int = DEFAULT_MAX_N,
) -> tuple[float, SosCertificate, SolverStatus]:
    """Solve the degree-1 SOS relaxation, returning (bound, certificate, status).

    With Optimal status the bound is the SDP optimum; with NumericLimit the
    best point found is passed through, and the caller can decide whether
    to trust it by re-verifying the certificate.
    """
    validate(instance)
    n = instance.n
    if n > max_n:
        raise ProblemTooLarge(f"n = {n} exceeds the SDP guard {max_n}")
    G = instance.A.T @ instance.A
    h = instance.A.T @ instance.b
    beta = float(instance.b @ instance.b)
    w = instance.weights
    dim = 2 * n + 1
    c = dim - 1

    b = ProgramBuilder()
    lam = b.add_var()
    tau = b.add_var(lower=0.0)
    t = b.add_vars(n)
    r = b.add_vars(n)
    S = b.add_vars(dim * (dim + 1) // 2)
    b.set_objective([lam], [-1.0])

    def s(i, j):
        return S[tri_index(i, j)]

    for i in range(n):
        for j in range(i):
            b.add_eq([s(i, j), tau], [2.0, -2.0 * G[i, j]], 0.0)
            b.add_eq([s(n + i, n + j)], [2.0], 0.0)
        b.add_eq([s(i, i), tau], [1.0, -G[i, i]], w[i] ** 2 / instance.gamma)
        b.add_eq([s(n + i, n + i), r[i]], [1.0, 1.0], 0.0)
        for j in range(n):
            if i == j:
                b.add_eq([s(i, n + i), t[i]], [2.0, 1.0], 0.0)
            else:
                b.add_eq([s(i, n + j)], [2.0], 0.0)
        b.add_eq([s(c, i), tau, t[i]], [2.0, 2.0 * h[i], -1.0], 0.0)
        b.add_eq([s(c, n + i), r[i]], [2.0, -1.0], 1.0)
    b.add_eq([s(c, c), tau, lam], [1.0, instance.epsilon - beta, 1.0], 0.0)
    b.add_cone("psd", S, dim=dim)

    point, status = solve_conic(b.build(), time_limit)
    cert = SosCertificate(
        lam=float(point[lam]),
        S=unpack_symmetric(point[S], dim),
        tau=float(point[tau]),
        t=point[t],
        r=point[r],
    )
    return cert.lam, cert, status
