"""First-order SQP for equality-constrained minimization.

Each iteration solves

    min_x  <grad f(x_k), x - x_k> + ||x - x_k||^2 / (2 eta)
    s.t.   F(x_k) + J(x_k) (x - x_k) = 0,

whose minimizer has the closed form

    x_{k+1} = x_k - eta * rgrad(x_k) - J(x_k)^+ F(x_k),

a tangential gradient step plus a Gauss-Newton feasibility correction.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveCurvatureError, RankDeficientError
from .geometry import (GeometryFrame, SpectralSummary, frame_at, hessian_spectrum,
                       riemannian_hessian, tangent_normal_split)
from .problem import Problem

__all__ = [
    "SolverConfig",
    "IterateRecord",
    "Termination",
    "Trajectory",
    "sqp_step",
    "spectrum_at",
    "canonical_stepsize",
    "experiment_stepsize",
    "stepsize",
    "run_sqp",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("k", "f", "feas", "rgrad_norm", "a", "b", "dist")


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-stepsize solver settings shared by SQP and RGD.

    Parameters
    ----------
    eta : float
        Stepsize, strictly positive.
    max_iters : int
        Maximum number of steps.
    grad_tol : float
        Stop once the extended Riemannian gradient norm is at most this.
    feas_cap : float or None
        Declare divergence once ``||F(x_k)||`` exceeds this.
    record_iterates : bool
        Keep a copy of every iterate in the trajectory records.
    """

    eta: float
    max_iters: int = 1000
    grad_tol: float = 1e-10
    feas_cap: Optional[float] = 1e6
    record_iterates: bool = False

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be a positive finite number, got {self.eta}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.grad_tol < 0:
            raise ValueError(f"grad_tol must be non-negative, got {self.grad_tol}")


@dataclass(frozen=True)
class IterateRecord:
    k: int
    f_val: float
    feas: float
    rgrad_norm: float
    a: Optional[float] = None
    b: Optional[float] = None
    dist: Optional[float] = None
    x: Optional[np.ndarray] = None


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"
    RANK_DEFICIENT = "rank_deficient"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class Trajectory:
    """Iterates and diagnostics of one solver run; ``records[k]`` describes ``x_k``."""

    records: list[IterateRecord]
    termination: Termination
    config: SolverConfig
    x_final: np.ndarray
    method: str = "sqp"
    extra_columns: dict[str, list[float]] = field(default_factory=dict)

    @property
    def iters(self) -> int:
        return len(self.records) - 1

    def column(self, name: str) -> np.ndarray:
        attr = {"f": "f_val"}.get(name, name)
        return np.array([np.nan if getattr(r, attr) is None else getattr(r, attr)
                         for r in self.records], dtype=float)

    def iterates(self) -> np.ndarray:
        if any(r.x is None for r in self.records):
            raise ValueError("trajectory was recorded without iterates")
        return np.stack([r.x for r in self.records])

    def summary(self) -> dict:
        return {
            "method": self.method,
            "termination": self.termination.value,
            "iters": self.iters,
            "final_rgrad_norm": float(self.records[-1].rgrad_norm) if self.records else None,
        }

    def to_csv(self, path=None) -> str:
        """Write ``k,f,feas,rgrad_norm,a,b,dist`` (plus any extra columns) as CSV.

        Returns the CSV text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = list(self.extra_columns)
        w.writerow(list(CSV_COLUMNS) + extra)
        for i, r in enumerate(self.records):
            row = [r.k, r.f_val, r.feas, r.rgrad_norm, r.a, r.b, r.dist]
            row += [self.extra_columns[c][i] for c in extra]
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def sqp_step(problem: Problem, x: np.ndarray, eta: float,
             frame: Optional[GeometryFrame] = None) -> np.ndarray:
    """One closed-form SQP update ``x - eta * rgrad(x) - J(x)^+ F(x)``.

    ``frame`` may be passed to reuse a frame already computed at ``x``.
    """
    fr = frame_at(problem, x) if frame is None else frame
    return fr.x - eta * fr.rgrad - fr.feasibility_correction()


def spectrum_at(problem: Problem, x_star: np.ndarray) -> SpectralSummary:
    """Tangent spectrum of the Riemannian Hessian at ``x_star``."""
    H = riemannian_hessian(problem, x_star)
    return hessian_spectrum(H, frame_at(problem, x_star))


def canonical_stepsize(problem: Problem, x_star: np.ndarray) -> float:
    """``1 / lambda_max`` of the Riemannian Hessian at the solution."""
    lam_max = spectrum_at(problem, x_star).lambda_max
    if not lam_max > 0:
        raise NonPositiveCurvatureError(f"lambda_max = {lam_max:.3e} is not positive")
    return 1.0 / lam_max


def experiment_stepsize(problem: Problem, x_star: np.ndarray) -> float:
    """Half the canonical stepsize, ``1 / (2 lambda_max)``.

    For the eigenvalue problem this is ``1 / (2 (lam_n - lam_1))``.
    """
    return 0.5 * canonical_stepsize(problem, x_star)


_POLICIES: dict[str, Callable[[Problem, np.ndarray], float]] = {
    "canonical": canonical_stepsize,
    "experiment": experiment_stepsize,
}


def stepsize(problem: Problem, x_star: np.ndarray, policy: str = "canonical") -> float:
    """Stepsize from a named policy: ``canonical`` or ``experiment``."""
    try:
        return _POLICIES[policy](problem, x_star)
    except KeyError:
        raise ValueError(f"unknown stepsize policy {policy!r}; "
                         f"choose from {sorted(_POLICIES)}") from None


def _record(problem, fr, k, frame_star, keep_x):
    a = b = dist = None
    if frame_star is not None:
        a, b = tangent_normal_split(frame_star, fr.x)
        dist = float(np.linalg.norm(fr.x - frame_star.x))
    return IterateRecord(
        k=k,
        f_val=float(problem.f(fr.x)),
        feas=float(np.linalg.norm(fr.Fx)),
        rgrad_norm=float(np.linalg.norm(fr.rgrad)),
        a=a, b=b, dist=dist,
        x=fr.x.copy() if keep_x else None,
    )


def iterate(problem: Problem, x0: np.ndarray, config: SolverConfig,
            update: Callable[[GeometryFrame], np.ndarray],
            x_star: Optional[np.ndarray] = None, method: str = "sqp") -> Trajectory:
    """Drive ``x_{k+1} = update(frame_at(x_k))`` with logging and stopping rules.

    Shared by :func:`run_sqp` and the Riemannian comparator.  Rank loss and
    blow-up are reported through ``Trajectory.termination``.
    """
    frame_star = frame_at(problem, x_star) if x_star is not None else None
    x = np.array(x0, dtype=float)
    records: list[IterateRecord] = []
    k = 0
    while True:
        try:
            fr = frame_at(problem, x)
        except RankDeficientError:
            status = Termination.RANK_DEFICIENT
            break
        rec = _record(problem, fr, k, frame_star, config.record_iterates)
        records.append(rec)
        if not (np.all(np.isfinite(x)) and math.isfinite(rec.rgrad_norm)
                and math.isfinite(rec.feas)):
            status = Termination.DIVERGED
            break
        if rec.rgrad_norm <= config.grad_tol:
            status = Termination.CONVERGED
            break
        if config.feas_cap is not None and rec.feas > config.feas_cap:
            status = Termination.DIVERGED
            break
        if k >= config.max_iters:
            status = Termination.MAX_ITERS
            break
        x = update(fr)
        k += 1
    return Trajectory(records=records, termination=status, config=replace(config),
                      x_final=x, method=method)


def run_sqp(problem: Problem, x0: np.ndarray, config: SolverConfig,
            x_star: Optional[np.ndarray] = None) -> Trajectory:
    """Iterate the closed-form SQP update from ``x0``.

    Parameters
    ----------
    problem : Problem
    x0 : ndarray
        Starting point; need not be feasible.
    config : SolverConfig
    x_star : ndarray, optional
        Known solution, enables the ``a``, ``b`` and ``dist`` diagnostics.

    Returns
    -------
    Trajectory
        Never raises on rank loss or divergence; see ``termination``.
    """
    eta = config.eta
    return iterate(problem, x0, config, lambda fr: sqp_step(problem, fr.x, eta, frame=fr),
                   x_star=x_star, method="sqp")
