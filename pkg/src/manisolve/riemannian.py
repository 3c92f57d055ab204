"""Riemannian gradient descent with a retraction, the comparator for SQP."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RetractionError
from .geometry import frame_at
from .problem import Problem
from .sqp import SolverConfig, Trajectory, iterate

__all__ = ["RetractionMode", "RetractionConfig", "retract", "project_to_manifold", "run_rgd"]


class RetractionMode(str, enum.Enum):
    CLOSED_FORM_SPHERE = "closed_form_sphere"
    GAUSS_NEWTON = "gauss_newton"


@dataclass(frozen=True)
class RetractionConfig:
    mode: RetractionMode = RetractionMode.GAUSS_NEWTON
    gn_tol: float = 1e-12
    gn_max_iters: int = 20

    def __post_init__(self):
        object.__setattr__(self, "mode", RetractionMode(self.mode))
        if not self.gn_tol > 0:
            raise ValueError(f"gn_tol must be positive, got {self.gn_tol}")
        if self.gn_max_iters < 1:
            raise ValueError(f"gn_max_iters must be at least 1, got {self.gn_max_iters}")


def project_to_manifold(problem: Problem, y: np.ndarray, tol: float = 1e-12,
                        max_iters: int = 20) -> np.ndarray:
    """Gauss-Newton feasibility restoration ``y <- y - J(y)^+ F(y)``.

    This is the SQP update with a zero stepsize, repeated until
    ``||F(y)|| <= tol``.
    """
    y = np.array(y, dtype=float)
    for _ in range(max_iters + 1):
        fr = frame_at(problem, y)
        if np.linalg.norm(fr.Fx) <= tol:
            return y
        y = y - fr.feasibility_correction()
    if np.linalg.norm(problem.F(y)) <= tol:
        return y
    raise RetractionError(
        f"Gauss-Newton did not reach ||F|| <= {tol:.1e} in {max_iters} iterations")


def retract(problem: Problem, x: np.ndarray, v: np.ndarray,
            cfg: Optional[RetractionConfig] = None) -> np.ndarray:
    """Map the tangent step ``v`` at ``x`` back onto the manifold."""
    cfg = RetractionConfig() if cfg is None else cfg
    y = np.asarray(x, dtype=float) + np.asarray(v, dtype=float)
    if cfg.mode is RetractionMode.CLOSED_FORM_SPHERE:
        return y / np.linalg.norm(y)
    return project_to_manifold(problem, y, cfg.gn_tol, cfg.gn_max_iters)


def run_rgd(problem: Problem, x0: np.ndarray, config: SolverConfig,
            rcfg: Optional[RetractionConfig] = None,
            x_star: Optional[np.ndarray] = None) -> Trajectory:
    """Riemannian gradient descent ``x_{k+1} = R_{x_k}(-eta * rgrad(x_k))``.

    ``x0`` must already be feasible to ``rcfg.gn_tol``.  Logging and
    termination follow :func:`manisolve.sqp.run_sqp`; a failed retraction
    raises :class:`~manisolve.errors.RetractionError`.
    """
    rcfg = RetractionConfig() if rcfg is None else rcfg
    x0 = np.asarray(x0, dtype=float)
    feas0 = float(np.linalg.norm(problem.F(x0)))
    if feas0 > rcfg.gn_tol:
        raise ValueError(f"RGD needs a feasible start: ||F(x0)|| = {feas0:.3e} > {rcfg.gn_tol:.1e}")
    eta = config.eta
    return iterate(problem, x0, config,
                   lambda fr: retract(problem, fr.x, -eta * fr.rgrad, rcfg),
                   x_star=x_star, method="rgd")
