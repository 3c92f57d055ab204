"""Numerical checks of the convergence theory.

The routines here estimate the constants the theory treats as given
(Lipschitz and perturbation constants, Taylor-remainder constants),
measure the per-step contraction of the potential ``a^2 + sigma * b``, and
test the global feasibility-tube and stationarity-decay properties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InsufficientDataError
from .geometry import (SpectralSummary, frame_at, riemannian_hessian,
                       tangent_basis, tangent_normal_split)
from .problem import Problem
from .riemannian import RetractionConfig, project_to_manifold, retract
from .sqp import SolverConfig, Trajectory, run_sqp, sqp_step

__all__ = [
    "qp_kkt_step",
    "loglog_slope",
    "sample_ball",
    "sample_on_manifold",
    "taylor_remainder",
    "ExpansionTerms",
    "check_expansion_terms",
    "fit_envelope",
    "calibrate_remainder",
    "remainder_bound_holds",
    "calibrate_expansion",
    "EstimatedConstants",
    "estimate_constants",
    "RateReport",
    "potential_bound",
    "check_local_rate",
    "sigma_search",
    "iterations_to_distance",
    "GlobalReport",
    "tube_stepsize",
    "check_global",
    "calibrate_global_constant",
    "global_bound_terms",
    "decay_sweep",
    "normal_contraction_exponent",
    "quadratic_attraction_slope",
    "sqp_rgd_step_slope",
]


def qp_kkt_step(problem: Problem, x: np.ndarray, eta: float) -> np.ndarray:
    """Solve the SQP subproblem through its ``(n+m)`` KKT system.

    Independent of the closed-form update; used as a reference.
    ``[[I/eta, J^T], [J, 0]] [d; y] = [-grad f; -F]``.
    """
    x = np.asarray(x, dtype=float)
    J = np.atleast_2d(problem.jac_F(x))
    m, n = J.shape
    K = np.zeros((n + m, n + m))
    K[:n, :n] = np.eye(n) / eta
    K[:n, n:] = J.T
    K[n:, :n] = J
    rhs = np.concatenate([-np.asarray(problem.grad_f(x), dtype=float),
                          -np.atleast_1d(problem.F(x))])
    sol = np.linalg.solve(K, rhs)
    return x + sol[:n]


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log(ys)`` against ``log(xs)``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def sample_ball(center: np.ndarray, radius: float, size: int,
                rng: np.random.Generator) -> np.ndarray:
    """``size`` points uniformly distributed in the Euclidean ball."""
    n = center.size
    z = rng.standard_normal((size, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(size, 1)) ** (1.0 / n)
    return center + r * z


def sample_on_manifold(problem: Problem, x_star: np.ndarray, radius: float, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Feasible points near ``x_star``: random tangent step of length ``radius``, then projected."""
    B = tangent_basis(frame_at(problem, x_star))
    out = []
    for _ in range(size):
        c = rng.standard_normal(B.shape[1])
        v = radius * (B @ c) / np.linalg.norm(c)
        out.append(project_to_manifold(problem, x_star + v))
    return np.array(out)


def taylor_remainder(problem: Problem, x_star: np.ndarray, x: np.ndarray,
                     H_star: Optional[np.ndarray] = None) -> np.ndarray:
    """``rgrad(x) - Hess f(x_star) (x - x_star)``."""
    if H_star is None:
        H_star = riemannian_hessian(problem, x_star)
    return frame_at(problem, x).rgrad - H_star @ (np.asarray(x, dtype=float) - x_star)


@dataclass(frozen=True)
class ExpansionTerms:
    R1: float
    R2: float
    bound: float


def check_expansion_terms(problem: Problem, x_star: np.ndarray, x: np.ndarray,
                          c1: float = 0.0, c2: float = 0.0, eps: Optional[float] = None,
                          H_star: Optional[np.ndarray] = None) -> ExpansionTerms:
    """Remainders of the inner-product and squared-norm expansions of ``rgrad``.

    ``R1 = <rgrad, d> - <d, H d>`` and ``R2 = ||rgrad||^2 - <d, H^2 d>`` with
    ``d = x - x_star``; ``bound = eps * (c1 * a^2 + c2 * b)``.  ``eps``
    defaults to ``||d||``.
    """
    if H_star is None:
        H_star = riemannian_hessian(problem, x_star)
    fr_star = frame_at(problem, x_star)
    d = np.asarray(x, dtype=float) - x_star
    g = frame_at(problem, x).rgrad
    Hd = H_star @ d
    R1 = float(g @ d - d @ Hd)
    R2 = float(g @ g - Hd @ Hd)
    a, b = tangent_normal_split(fr_star, x)
    eps = float(np.linalg.norm(d)) if eps is None else eps
    return ExpansionTerms(R1=R1, R2=R2, bound=eps * (c1 * a * a + c2 * b))


def fit_envelope(features: np.ndarray, targets: np.ndarray, safety: float = 1.0) -> np.ndarray:
    """Smallest non-negative ``c`` with ``features @ c >= targets`` in the L1 sense.

    Solves ``min sum_i features_i . c`` subject to ``features_i . c >= targets_i``
    and ``c >= 0``, then rescales so every sample is covered exactly before
    multiplying by ``safety``.
    """
    Phi = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    scale = Phi.mean(axis=0)
    scale[scale <= 0] = 1.0
    Phin = Phi / scale
    tn = t / max(t.max(), np.finfo(float).tiny)
    res = linprog(Phin.sum(axis=0), A_ub=-Phin, b_ub=-tn,
                  bounds=[(0, None)] * Phi.shape[1], method="highs")
    if res.status != 0:
        raise RuntimeError(f"envelope LP failed: {res.message}")
    c = res.x * max(t.max(), np.finfo(float).tiny) / scale
    cover = Phi @ c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(t > 0, t / cover, 0.0)
    c = c * max(1.0, float(np.nanmax(ratio)))
    return safety * c


def _remainder_data(problem, x_star, points, H_star):
    fr_star = frame_at(problem, x_star)
    feats, targ = [], []
    for x in points:
        a, b = tangent_normal_split(fr_star, x)
        feats.append((a * a + b * b, b))
        targ.append(np.linalg.norm(taylor_remainder(problem, x_star, x, H_star)))
    return np.array(feats), np.array(targ)


def calibrate_remainder(problem: Problem, x_star: np.ndarray, points: np.ndarray,
                        safety: float = 2.0) -> tuple[float, float]:
    """Constants ``(C1, C2)`` with ``||r(x)|| <= C1 ||x - x_star||^2 + C2 b`` on ``points``."""
    H_star = riemannian_hessian(problem, x_star)
    feats, targ = _remainder_data(problem, x_star, points, H_star)
    c = fit_envelope(feats, targ, safety)
    return float(c[0]), float(c[1])


def remainder_bound_holds(problem: Problem, x_star: np.ndarray, points: np.ndarray,
                          c1: float, c2: float) -> np.ndarray:
    """Boolean mask of points where ``||r(x)|| <= c1 ||x - x_star||^2 + c2 b``."""
    H_star = riemannian_hessian(problem, x_star)
    feats, targ = _remainder_data(problem, x_star, points, H_star)
    return targ <= feats @ np.array([c1, c2])


def calibrate_expansion(problem: Problem, x_star: np.ndarray, points: np.ndarray,
                        eps: float, safety: float = 2.0) -> tuple[float, float]:
    """Constants with ``max(|R1|, |R2|) <= eps (C1 a^2 + C2 b)`` on ``points``."""
    H_star = riemannian_hessian(problem, x_star)
    fr_star = frame_at(problem, x_star)
    feats, targ = [], []
    for x in points:
        t = check_expansion_terms(problem, x_star, x, eps=eps, H_star=H_star)
        a, b = tangent_normal_split(fr_star, x)
        feats.append((a * a, b))
        targ.append(max(abs(t.R1), abs(t.R2)) / eps)
    c = fit_envelope(np.array(feats), np.array(targ), safety)
    return float(c[0]), float(c[1])


@dataclass(frozen=True)
class EstimatedConstants:
    """Empirical constants from sampled pairs in a ball around ``x_star``."""

    beta_P_hat: float
    beta_D_hat: float
    beta_E_hat: float
    beta_F_hat: float
    beta_f_hat: float
    gamma_F_hat: float
    G_f_hat: float
    C_r1_hat: float
    C_r2_hat: float
    radius: float
    n_samples: int


def estimate_constants(problem: Problem, x_star: np.ndarray, radius: float,
                       n_samples: int, seed: int, safety: float = 2.0) -> EstimatedConstants:
    """Estimate perturbation, Lipschitz and remainder constants near ``x_star``.

    Draws ``n_samples`` independent pairs uniformly in the ball of the given
    radius.  Lipschitz-type constants are the largest difference quotient
    over pairs (operator norms for matrices); ``gamma_F_hat`` and
    ``G_f_hat`` are the min least singular value of ``J`` and max gradient
    norm over all sampled points.  The remainder constants come from
    :func:`fit_envelope` over the same points.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    pts = sample_ball(x_star, radius, 2 * n_samples, rng)
    frames = [frame_at(problem, x) for x in pts]

    def opnorm(M):
        return float(np.linalg.norm(M, 2))

    bP = bD = bE = bF = bf = 0.0
    for i in range(n_samples):
        f1, f2 = frames[2 * i], frames[2 * i + 1]
        dx = float(np.linalg.norm(f1.x - f2.x))
        bP = max(bP, opnorm(f1.P - f2.P) / dx)
        bD = max(bD, opnorm(f1.J_pinv - f2.J_pinv) / dx)
        bE = max(bE, float(np.linalg.norm(f1.rgrad - f2.rgrad)) / dx)
        bF = max(bF, opnorm(f1.J - f2.J) / dx)
        bf = max(bf, float(np.linalg.norm(f1.egrad - f2.egrad)) / dx)
    gamma = min(fr.sigma_min_J for fr in frames)
    G = max(float(np.linalg.norm(fr.egrad)) for fr in frames)
    c1 = c2 = float("nan")
    if problem.has_second_derivatives:
        c1, c2 = calibrate_remainder(problem, x_star, pts, safety)
    return EstimatedConstants(beta_P_hat=bP, beta_D_hat=bD, beta_E_hat=bE, beta_F_hat=bF,
                              beta_f_hat=bf, gamma_F_hat=gamma, G_f_hat=G,
                              C_r1_hat=c1, C_r2_hat=c2, radius=radius, n_samples=n_samples)


@dataclass(frozen=True)
class RateReport:
    per_step_ratios: list
    bound: float
    sigma: float
    violations: int
    asymptotic_rate: float


def potential_bound(kappa_R: float) -> float:
    """Per-step potential contraction factor ``(1 - 1/(2 kappa_R))^2``."""
    return (1.0 - 1.0 / (2.0 * kappa_R)) ** 2


def _tail_rate(dist, fit_floor, min_points=10):
    usable = np.flatnonzero(dist >= fit_floor)
    if usable.size == 0:
        return float("nan")
    last = usable[-1] + 1
    first = min(last // 2, max(0, last - min_points))
    ks = np.arange(first, last)
    if ks.size < min_points:
        return float("nan")
    slope = np.polyfit(ks, np.log(dist[first:last]), 1)[0]
    return float(np.exp(slope))


def check_local_rate(traj: Trajectory, spectrum: SpectralSummary, sigma: float,
                     dist_floor: float = 1e-7, fit_floor: float = 1e-11,
                     max_steps: Optional[int] = None) -> RateReport:
    """Per-step ratios of the potential ``a^2 + sigma * b`` and the tail rate.

    Steps starting from an iterate closer than ``dist_floor`` to the
    solution are skipped: there ``b`` is dominated by floating-point
    rounding (``~1e-16``) rather than geometry.  The asymptotic rate is a
    log-linear fit of ``dist`` over the second half of the records above
    ``fit_floor`` (at least 10 of them), ``nan`` if there are fewer.
    """
    if len(traj.records) < 3:
        raise InsufficientDataError(f"need at least 3 records, got {len(traj.records)}")
    a = traj.column("a")
    b = traj.column("b")
    dist = traj.column("dist")
    if np.isnan(a).any():
        raise InsufficientDataError("trajectory lacks tangent/normal distances (no x_star)")
    phi = a * a + sigma * b
    bound = potential_bound(spectrum.kappa_R)
    last = len(phi) - 1 if max_steps is None else min(len(phi) - 1, max_steps)
    ratios = [float(phi[k + 1] / phi[k]) for k in range(last)
              if dist[k] >= dist_floor and phi[k] > 0]
    violations = int(sum(r > bound for r in ratios))
    return RateReport(per_step_ratios=ratios, bound=bound, sigma=float(sigma),
                      violations=violations, asymptotic_rate=_tail_rate(dist, fit_floor))


def sigma_search(trajs: Iterable[Trajectory], spectrum: SpectralSummary,
                 grid: Optional[Sequence[float]] = None, **kwargs) -> float:
    """Potential weight minimizing total contraction violations; ties go to larger sigma."""
    trajs = list(trajs)
    grid = np.logspace(-6, 0, 25) if grid is None else np.asarray(grid, dtype=float)
    best_sigma, best_viol = None, None
    for s in sorted(grid, reverse=True):
        viol = sum(check_local_rate(t, spectrum, s, **kwargs).violations for t in trajs)
        if best_viol is None or viol < best_viol:
            best_sigma, best_viol = float(s), viol
    return best_sigma


def iterations_to_distance(traj: Trajectory, tol: float) -> Optional[int]:
    """First ``k`` with ``||x_k - x_star|| <= tol``, or ``None``."""
    dist = traj.column("dist")
    hit = np.flatnonzero(dist <= tol)
    return int(hit[0]) if hit.size else None


@dataclass(frozen=True)
class GlobalReport:
    stayed_in_tube: bool
    min_rgrad_sq: float
    bound: float


def tube_stepsize(eps: float, beta_F: float, G_f: float) -> float:
    """Largest stepsize keeping iterates in the ``eps``-tube: ``sqrt(eps / (2 beta_F G_f^2))``."""
    return float(np.sqrt(eps / (2.0 * beta_F * G_f ** 2)))


def global_bound_terms(traj: Trajectory, eps: float, f_lower: float) -> float:
    """``(f(x_0) - f_lower) / (k sqrt(eps)) + sqrt(eps)`` with ``k = max(1, iters)``."""
    k = max(1, traj.iters)
    f0 = traj.records[0].f_val
    return float((f0 - f_lower) / (k * np.sqrt(eps)) + np.sqrt(eps))


def check_global(traj: Trajectory, eps: float, f_lower: float, K2: float = 1.0) -> GlobalReport:
    """Tube membership and the stationarity bound ``K2 * global_bound_terms``."""
    feas = traj.column("feas")
    rg = traj.column("rgrad_norm")
    return GlobalReport(stayed_in_tube=bool(np.all(feas <= eps)),
                        min_rgrad_sq=float(np.min(rg) ** 2),
                        bound=K2 * global_bound_terms(traj, eps, f_lower))


def calibrate_global_constant(trajs: Iterable[Trajectory], eps: float, f_lower: float,
                              safety: float = 2.0) -> float:
    """Smallest ``K2`` making :func:`check_global` hold on every training run, times ``safety``."""
    ratios = [check_global(t, eps, f_lower).min_rgrad_sq / global_bound_terms(t, eps, f_lower)
              for t in trajs]
    if not ratios:
        raise InsufficientDataError("need at least one training trajectory")
    return safety * max(ratios)


def decay_sweep(problem: Problem, x0: np.ndarray, ks: Sequence[int], c: float,
                    beta_F: float, G_f: float) -> list[dict]:
    """Run ``k`` steps with ``eps = c / k`` and the tube stepsize, for each ``k``.

    Returns one dict per ``k`` with ``eps``, ``eta``, ``min_rgrad``,
    ``max_feas`` and the trajectory.
    """
    out = []
    for k in ks:
        eps = c / k
        eta = tube_stepsize(eps, beta_F, G_f)
        traj = run_sqp(problem, x0, SolverConfig(eta=eta, max_iters=int(k), grad_tol=0.0,
                                                 feas_cap=None))
        out.append({"k": int(k), "eps": eps, "eta": eta,
                    "min_rgrad": float(np.min(traj.column("rgrad_norm"))),
                    "max_feas": float(np.max(traj.column("feas"))), "traj": traj})
    return out


def normal_contraction_exponent(problem: Problem, x_star: np.ndarray, eta: float,
                                radii: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                                n_per_radius: int = 20, seed: int = 0) -> float:
    """Log-log exponent of the worst ``b_+`` against ``a^2 + b^2`` after one SQP step.

    Starts are drawn on spheres of each radius around ``x_star``; the
    per-radius maximum of ``b_+`` is regressed on ``radius^2``.
    """
    rng = np.random.default_rng(seed)
    fr_star = frame_at(problem, x_star)
    xs, ys = [], []
    for r in radii:
        worst = 0.0
        for _ in range(n_per_radius):
            u = rng.standard_normal(x_star.size)
            x = x_star + r * u / np.linalg.norm(u)
            _, bp = tangent_normal_split(fr_star, sqp_step(problem, x, eta))
            worst = max(worst, bp)
        xs.append(r * r)
        ys.append(worst)
    return loglog_slope(xs, ys)


def quadratic_attraction_slope(problem: Problem, x: np.ndarray,
                               etas: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> float:
    """Slope of ``||F(x_+)||`` against ``eta`` for one SQP step from feasible ``x``."""
    feas = [float(np.linalg.norm(problem.F(sqp_step(problem, x, e)))) for e in etas]
    return loglog_slope(etas, feas)


def sqp_rgd_step_slope(problem: Problem, x: np.ndarray,
                       etas: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                       rcfg: Optional[RetractionConfig] = None) -> float:
    """Slope of the one-step SQP/RGD discrepancy against ``eta`` from feasible ``x``."""
    devs = []
    for e in etas:
        fr = frame_at(problem, x)
        x_sqp = sqp_step(problem, x, e, frame=fr)
        x_rgd = retract(problem, x, -e * fr.rgrad, rcfg)
        devs.append(float(np.linalg.norm(x_sqp - x_rgd)))
    return loglog_slope(etas, devs)
