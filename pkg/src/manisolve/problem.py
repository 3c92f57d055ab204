"""Equality-constrained problem container and benchmark instances.

The main benchmark is the eigenvalue problem

    minimize  1/2 x^T A x   subject to  ||x||^2 - 1 = 0,

whose solution is the eigenvector of the smallest eigenvalue of ``A``.
Instances are generated with a prescribed spectrum so that the condition
number of the Riemannian Hessian at the solution is known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Problem",
    "EigenInstance",
    "eigenvalue_problem",
    "make_instance",
    "sample_initialization",
    "random_quadratic_problem",
    "derivative_errors",
    "check_derivatives",
]

Vector = np.ndarray
Matrix = np.ndarray


@dataclass(frozen=True)
class Problem:
    """Smooth equality-constrained minimization problem ``min f(x) s.t. F(x) = 0``.

    Parameters
    ----------
    n, m : int
        Ambient dimension and number of constraints, ``1 <= m <= n``.
    f, grad_f : callable
        Objective and its gradient.
    F, jac_F : callable
        Constraint map ``R^n -> R^m`` and its ``(m, n)`` Jacobian.
    hess_f, hess_F : callable, optional
        Objective Hessian ``(n, n)`` and constraint Hessians ``(m, n, n)``.
        Only the Riemannian Hessian and the analysis tools need them.
    name : str
        Label used in reports.
    """

    n: int
    m: int
    f: Callable[[Vector], float]
    grad_f: Callable[[Vector], Vector]
    F: Callable[[Vector], Vector]
    jac_F: Callable[[Vector], Matrix]
    hess_f: Optional[Callable[[Vector], Matrix]] = None
    hess_F: Optional[Callable[[Vector], np.ndarray]] = None
    name: str = "problem"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")

    @property
    def has_second_derivatives(self) -> bool:
        return self.hess_f is not None and self.hess_F is not None


@dataclass(frozen=True)
class EigenInstance:
    """Symmetric matrix with a simple smallest eigenvalue.

    ``eigvals`` is sorted ascending and ``x_star`` is the unit eigenvector
    of ``eigvals[0]``.
    """

    A: Matrix
    eigvals: Vector
    x_star: Vector
    kappa_R: float = field(init=False)

    def __post_init__(self):
        lam = self.eigvals
        gap = lam[1] - lam[0]
        if not gap > 0:
            raise ValueError("smallest eigenvalue must be simple")
        object.__setattr__(self, "kappa_R", float((lam[-1] - lam[0]) / gap))

    @property
    def n(self) -> int:
        return self.A.shape[0]


def eigenvalue_problem(inst: EigenInstance) -> Problem:
    """Build the unit-sphere Rayleigh-quotient problem for ``inst.A``."""
    A = inst.A
    n = A.shape[0]
    eye2 = 2.0 * np.eye(n)

    def f(x):
        return 0.5 * float(x @ A @ x)

    def grad_f(x):
        return A @ x

    def hess_f(x):
        return A

    def F(x):
        return np.array([x @ x - 1.0])

    def jac_F(x):
        return 2.0 * np.asarray(x, dtype=float)[None, :]

    def hess_F(x):
        return eye2[None, :, :]

    return Problem(n=n, m=1, f=f, grad_f=grad_f, F=F, jac_F=jac_F,
                   hess_f=hess_f, hess_F=hess_F, name="eigenvalue")


def make_instance(n: int, kappa: float, seed: int) -> EigenInstance:
    """Random symmetric matrix whose Riemannian condition number equals ``kappa``.

    The spectrum is ``0, 1, u_1, ..., u_{n-3}, kappa`` with ``u_i`` uniform
    on ``[1, kappa]``, so ``(lam_n - lam_1) / (lam_2 - lam_1) = kappa``.
    The eigenbasis is a Haar-random orthogonal matrix.

    Parameters
    ----------
    n : int
        Dimension, at least 3.
    kappa : float
        Target condition number, strictly greater than 1.
    seed : int
        Seed for ``numpy.random.default_rng``.

    Returns
    -------
    EigenInstance
    """
    if n < 3:
        raise ValueError(f"n must be at least 3, got {n}")
    if not kappa > 1:
        raise ValueError(f"kappa must exceed 1, got {kappa}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    interior = np.sort(rng.uniform(1.0, kappa, size=n - 3))
    eigvals = np.concatenate([[0.0, 1.0], interior, [float(kappa)]])
    A = (Q * eigvals) @ Q.T
    A = 0.5 * (A + A.T)
    return EigenInstance(A=A, eigvals=eigvals, x_star=Q[:, 0].copy())


def _unit_direction(rng: np.random.Generator, n: int) -> Vector:
    u = rng.standard_normal(n)
    return u / np.linalg.norm(u)


def sample_initialization(x_star: Vector, eps: float, seed: int) -> Vector:
    """Point at distance exactly ``eps`` from ``x_star`` in a uniform random direction."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    return x_star + eps * _unit_direction(rng, x_star.size)


def random_quadratic_problem(n: int, m: int, seed: int) -> tuple[Problem, Vector]:
    """Quadratic objective with ``m`` quadratic constraints through a known point.

    Constraints are ``F_i(x) = 1/2 x^T B_i x + d_i^T x - e_i`` with ``e_i``
    chosen so that a random point ``x0`` is feasible.  Returns the problem
    and ``x0``.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = 0.5 * (G + G.T)
    c = rng.standard_normal(n)
    B = rng.standard_normal((m, n, n)) / np.sqrt(n)
    B = 0.5 * (B + B.transpose(0, 2, 1))
    D = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n) / np.sqrt(n)
    e = 0.5 * np.einsum("i,kij,j->k", x0, B, x0) + D @ x0

    def f(x):
        return 0.5 * float(x @ A @ x) + float(c @ x)

    def grad_f(x):
        return A @ x + c

    def hess_f(x):
        return A

    def F(x):
        return 0.5 * np.einsum("i,kij,j->k", x, B, x) + D @ x - e

    def jac_F(x):
        return np.einsum("kij,j->ki", B, x) + D

    def hess_F(x):
        return B

    prob = Problem(n=n, m=m, f=f, grad_f=grad_f, F=F, jac_F=jac_F,
                   hess_f=hess_f, hess_F=hess_F, name=f"quadratic(n={n},m={m})")
    return prob, x0


def _central_jacobian(fun, x, h):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def _rel_err(approx, exact):
    scale = max(np.linalg.norm(exact), np.linalg.norm(approx), np.finfo(float).tiny)
    return float(np.linalg.norm(approx - exact) / scale)


def derivative_errors(problem: Problem, x: Vector) -> dict[str, float]:
    """Relative discrepancy between analytic derivatives and central differences at ``x``.

    The step is ``1e-5 * (1 + ||x||)``.  Keys are ``grad_f`` and ``jac_F``,
    plus ``hess_f``/``hess_F`` when the problem supplies them.
    """
    x = np.asarray(x, dtype=float)
    h = 1e-5 * (1.0 + np.linalg.norm(x))
    errs = {
        "grad_f": _rel_err(_central_jacobian(problem.f, x, h)[0], problem.grad_f(x)),
        "jac_F": _rel_err(_central_jacobian(problem.F, x, h), problem.jac_F(x)),
    }
    if problem.hess_f is not None:
        errs["hess_f"] = _rel_err(_central_jacobian(problem.grad_f, x, h), problem.hess_f(x))
    if problem.hess_F is not None:
        fd = _central_jacobian(problem.jac_F, x, h)
        errs["hess_F"] = _rel_err(fd, np.asarray(problem.hess_F(x)))
    return errs


def check_derivatives(problem: Problem, n_points: int = 20, seed: int = 0,
                      center: Optional[Vector] = None, scale: float = 1.0) -> float:
    """Worst relative finite-difference error over random points.

    Points are ``center + scale * z`` with ``z`` standard normal.  A value
    below ``1e-5`` means the supplied derivatives are consistent.
    """
    rng = np.random.default_rng(seed)
    center = np.zeros(problem.n) if center is None else np.asarray(center, dtype=float)
    worst = 0.0
    for _ in range(n_points):
        x = center + scale * rng.standard_normal(problem.n)
        worst = max(worst, max(derivative_errors(problem, x).values()))
    return worst
