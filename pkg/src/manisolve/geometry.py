"""Riemannian quantities of the constraint manifold, on and off the manifold.

Everything is computed from a thin QR factorization of the transposed
constraint Jacobian ``J^T = Q R``:

* ``J^+ = J^T (J J^T)^{-1} = Q R^{-T}``
* normal projection ``P_perp = J^+ J = Q Q^T``
* tangent projection ``P = I - Q Q^T``

These formulas make sense at any point where ``J`` has full row rank, so
the same code serves feasible and infeasible points alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateTangentError, MissingDerivativeError, RankDeficientError
from .problem import Problem

__all__ = [
    "GeometryFrame",
    "SpectralSummary",
    "rank_tolerance",
    "pseudoinverse",
    "frame_at",
    "tangent_basis",
    "riemannian_hessian",
    "tangent_normal_split",
    "hessian_spectrum",
]


def rank_tolerance(J: np.ndarray) -> float:
    """Singular-value threshold below which ``J`` is treated as rank deficient."""
    return 1e-10 * max(1.0, float(np.linalg.norm(J, 2)))


def _factor(J):
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m, n = J.shape
    if m > n:
        raise RankDeficientError(f"more constraints than variables ({m} > {n})")
    Q, R = np.linalg.qr(J.T)
    sigma = np.linalg.svd(R, compute_uv=False)
    sigma_min = float(sigma[-1])
    tol = rank_tolerance(J)
    if not sigma_min > tol:
        raise RankDeficientError(
            f"constraint Jacobian is rank deficient: sigma_min={sigma_min:.3e} <= {tol:.3e}")
    return J, Q, R, sigma_min


def _pinv_from_qr(Q, R):
    # J^+ = Q R^{-T} = (R^{-1} Q^T)^T
    return solve_triangular(R, Q.T).T


def pseudoinverse(J: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse ``J^T (J J^T)^{-1}`` of a full-row-rank ``J``.

    Raises
    ------
    RankDeficientError
        If the least singular value of ``J`` is not above :func:`rank_tolerance`.
    """
    J, Q, R, _ = _factor(J)
    return _pinv_from_qr(Q, R)


@dataclass(frozen=True)
class GeometryFrame:
    """Projections and extended Riemannian gradient at a point ``x``.

    ``Q`` holds an orthonormal basis of the row space of ``J``; the dense
    projection matrices ``P`` and ``P_perp`` are built on first access.
    """

    x: np.ndarray
    J: np.ndarray
    Q: np.ndarray
    J_pinv: np.ndarray
    rgrad: np.ndarray
    sigma_min_J: float
    egrad: np.ndarray
    Fx: np.ndarray

    @cached_property
    def P_perp(self) -> np.ndarray:
        return self.Q @ self.Q.T

    @cached_property
    def P(self) -> np.ndarray:
        return np.eye(self.x.size) - self.P_perp

    def project_tangent(self, u: np.ndarray) -> np.ndarray:
        return u - self.Q @ (self.Q.T @ u)

    def project_normal(self, u: np.ndarray) -> np.ndarray:
        return self.Q @ (self.Q.T @ u)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.J.shape[0]

    def multipliers(self) -> np.ndarray:
        """Least-squares multiplier estimate ``(J^+)^T grad f(x)``."""
        return self.J_pinv.T @ self.egrad

    def feasibility_correction(self) -> np.ndarray:
        """Gauss-Newton correction ``J^+ F(x)``."""
        return self.J_pinv @ self.Fx


def frame_at(problem: Problem, x: np.ndarray) -> GeometryFrame:
    """Evaluate all first-order geometric quantities at ``x``.

    ``x`` need not be feasible; the projections are the off-manifold
    extensions built from ``J = jac_F(x)``.
    """
    x = np.asarray(x, dtype=float)
    J, Q, R, sigma_min = _factor(problem.jac_F(x))
    J_pinv = _pinv_from_qr(Q, R)
    g = np.asarray(problem.grad_f(x), dtype=float)
    rgrad = g - Q @ (Q.T @ g)
    Fx = np.atleast_1d(np.asarray(problem.F(x), dtype=float))
    return GeometryFrame(x=x, J=J, Q=Q, J_pinv=J_pinv, rgrad=rgrad,
                         sigma_min_J=sigma_min, egrad=g, Fx=Fx)


def tangent_basis(frame: GeometryFrame) -> np.ndarray:
    """Orthonormal basis ``(n, n - m)`` of the kernel of ``frame.J``."""
    n, m = frame.n, frame.m
    if n == m:
        raise DegenerateTangentError("tangent space is {0} when n == m")
    Q, _ = np.linalg.qr(frame.J.T, mode="complete")
    return Q[:, m:]


def riemannian_hessian(problem: Problem, x: np.ndarray) -> np.ndarray:
    """Matrix of the Riemannian Hessian, extended to arbitrary ``x``.

    ``H = P hess_f P - sum_i mu_i P hess_F_i P`` with ``mu = (J^+)^T grad f``.
    The result is symmetrized.
    """
    if problem.hess_f is None or problem.hess_F is None:
        raise MissingDerivativeError(
            f"{problem.name}: riemannian_hessian needs hess_f and hess_F")
    fr = frame_at(problem, x)
    mu = fr.multipliers()
    curv = np.asarray(problem.hess_f(fr.x), dtype=float) - np.tensordot(
        mu, np.asarray(problem.hess_F(fr.x), dtype=float), axes=1)
    H = fr.P @ curv @ fr.P
    return 0.5 * (H + H.T)


def tangent_normal_split(frame_star: GeometryFrame, x: np.ndarray) -> tuple[float, float]:
    """Tangent and normal distances ``(a, b)`` of ``x - x_star`` at ``x_star``."""
    d = np.asarray(x, dtype=float) - frame_star.x
    dn = frame_star.project_normal(d)
    dt = d - dn
    return float(np.linalg.norm(dt)), float(np.linalg.norm(dn))


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of a Hessian restricted to a tangent space."""

    lambda_min: float
    lambda_max: float

    @property
    def kappa_R(self) -> float:
        if self.lambda_min > 0:
            return self.lambda_max / self.lambda_min
        return float("inf")


def hessian_spectrum(H: np.ndarray, frame_star: GeometryFrame) -> SpectralSummary:
    """Extreme eigenvalues of ``B^T H B`` for an orthonormal tangent basis ``B``."""
    B = tangent_basis(frame_star)
    Hr = B.T @ H @ B
    w = np.linalg.eigvalsh(0.5 * (Hr + Hr.T))
    return SpectralSummary(lambda_min=float(w[0]), lambda_max=float(w[-1]))
