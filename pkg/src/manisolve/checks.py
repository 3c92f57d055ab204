"""Verification battery driven by ``manisolve check``.

Each check returns a :class:`CheckReport`; ``passed`` compares
``statistic`` against ``threshold`` in the direction given by the check.
All randomness flows from the battery seed, so repeated runs produce
identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analysis import (calibrate_expansion, calibrate_global_constant, calibrate_remainder,
                       check_expansion_terms, check_global, check_local_rate, decay_sweep,
                       estimate_constants, tube_stepsize, loglog_slope,
                       normal_contraction_exponent, qp_kkt_step, quadratic_attraction_slope,
                       remainder_bound_holds, sample_ball, sample_on_manifold, sigma_search,
                       sqp_rgd_step_slope, taylor_remainder)
from .geometry import frame_at, riemannian_hessian, tangent_basis
from .problem import (EigenInstance, Problem, check_derivatives, eigenvalue_problem,
                      make_instance, random_quadratic_problem, sample_initialization)
from .riemannian import project_to_manifold
from .sqp import SolverConfig, canonical_stepsize, run_sqp, spectrum_at, sqp_step

__all__ = ["CheckReport", "Battery", "CHECKS", "run_checks", "closed_form_eigen_step",
           "eigen_tube_gradient_bound"]


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    passed: bool
    statistic: float
    threshold: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"check_name": self.check_name, "pass": bool(self.passed),
                "statistic": float(self.statistic), "threshold": float(self.threshold),
                "n_samples": int(self.n_samples), "seed": int(self.seed)}


def closed_form_eigen_step(A: np.ndarray, x: np.ndarray, eta: float) -> np.ndarray:
    """Explicit SQP update for the eigenvalue problem.

    ``x_+ = (||x||^2 + 1) / (2 ||x||^2) x - eta (I - x x^T / ||x||^2) A x``
    """
    s = float(x @ x)
    Ax = A @ x
    return (s + 1.0) / (2.0 * s) * x - eta * (Ax - x * (x @ Ax) / s)


def eigen_tube_gradient_bound(inst: EigenInstance, eps: float) -> float:
    """``sup ||A x||`` over ``{x : | ||x||^2 - 1 | <= eps}``, i.e. ``||A||_2 sqrt(1 + eps)``."""
    return float(np.max(np.abs(inst.eigvals)) * np.sqrt(1.0 + eps))


class Battery:
    """Fixed instances shared by the checks, all derived from one seed.

    ``problem`` may override the small eigenvalue problem used by the
    derivative check (e.g. to run a negative control).
    """

    def __init__(self, seed: int, problem: Optional[Problem] = None):
        self.seed = seed
        self.small = make_instance(20, 10.0, seed)
        self.small_problem = eigenvalue_problem(self.small)
        self.mid = make_instance(50, 10.0, seed + 1)
        self.mid_problem = eigenvalue_problem(self.mid)
        self.fd_problem = self.small_problem if problem is None else problem
        self._memo: dict = {}

    def memo(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


def _report(name, stat, thr, ok, n, seed):
    return CheckReport(name, bool(ok), float(stat), float(thr), int(n), int(seed))


def check_fd_derivatives(bt: Battery) -> CheckReport:
    err = check_derivatives(bt.fd_problem, n_points=20, seed=bt.seed)
    return _report("fd_derivatives", err, 1e-5, err < 1e-5, 20, bt.seed)


def check_qp_oracle(bt: Battery) -> CheckReport:
    rng = bt.rng(1)
    worst = 0.0
    for i in range(100):
        inst = make_instance(20, float(rng.uniform(2, 50)), int(rng.integers(2**31)))
        p = eigenvalue_problem(inst)
        x = inst.x_star + 0.3 * rng.standard_normal(20)
        eta = float(10 ** rng.uniform(-3, 0))
        a, b = sqp_step(p, x, eta), qp_kkt_step(p, x, eta)
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    return _report("qp_oracle_equivalence", worst, 1e-9, worst <= 1e-9, 100, bt.seed)


def check_closed_form(bt: Battery) -> CheckReport:
    rng = bt.rng(2)
    p, A = bt.small_problem, bt.small.A
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(20)
        x *= rng.uniform(0.5, 1.5) / np.linalg.norm(x)
        eta = float(10 ** rng.uniform(-3, 0))
        ref = closed_form_eigen_step(A, x, eta)
        worst = max(worst, np.linalg.norm(sqp_step(p, x, eta) - ref) / np.linalg.norm(ref))
    return _report("closed_form_eigen", worst, 1e-10, worst <= 1e-10, 100, bt.seed)


def check_projection_identities(bt: Battery) -> CheckReport:
    rng = bt.rng(3)
    worst = 0.0
    for i in range(20):
        p, x0 = random_quadratic_problem(12, 1 + i % 4, int(rng.integers(2**31)))
        fr = frame_at(p, x0 + 0.1 * rng.standard_normal(12))
        I = np.eye(12)
        worst = max(worst,
                    np.abs(fr.P @ fr.P - fr.P).max(),
                    np.abs(fr.P + fr.P_perp - I).max(),
                    np.abs(fr.J @ fr.P).max() / max(1.0, np.linalg.norm(fr.J, 2)),
                    np.abs(fr.J @ fr.rgrad).max() / max(1.0, np.linalg.norm(fr.J, 2)
                                                       * np.linalg.norm(fr.egrad)))
    return _report("projection_identities", worst, 1e-10, worst <= 1e-10, 20, bt.seed)


def check_hessian_fd(bt: Battery) -> CheckReport:
    """Riemannian Hessian against finite differences of the projected gradient field."""
    rng = bt.rng(4)
    p, x0 = random_quadratic_problem(10, 2, int(rng.integers(2**31)))
    worst = 0.0
    for _ in range(10):
        x = project_to_manifold(p, x0 + 0.05 * rng.standard_normal(10))
        fr = frame_at(p, x)
        B = tangent_basis(fr)
        u = B @ rng.standard_normal(B.shape[1])
        u /= np.linalg.norm(u)
        h = 1e-6
        fd = (frame_at(p, x + h * u).rgrad - frame_at(p, x - h * u).rgrad) / (2 * h)
        Hu = riemannian_hessian(p, x) @ u
        worst = max(worst, np.linalg.norm(fr.P @ fd - Hu) / max(1.0, np.linalg.norm(Hu)))
    return _report("riemannian_hessian_fd", worst, 1e-5, worst <= 1e-5, 10, bt.seed)


def check_quadratic_attraction(bt: Battery) -> CheckReport:
    rng = bt.rng(5)
    p, xs = bt.mid_problem, bt.mid.x_star
    slopes = []
    for _ in range(5):
        x = project_to_manifold(p, sample_initialization(xs, 0.5, int(rng.integers(2**31))))
        slopes.append(quadratic_attraction_slope(p, x, (1e-1, 1e-2, 1e-3)))
    s = min(slopes)
    return _report("quadratic_attraction_slope", s, 1.9, s >= 1.9, 5, bt.seed)


def check_taylor_slope(bt: Battery) -> CheckReport:
    rng = bt.rng(6)
    p, xs = bt.small_problem, bt.small.x_star
    H = riemannian_hessian(p, xs)
    B = tangent_basis(frame_at(p, xs))
    slopes = []
    for _ in range(5):
        u = B @ rng.standard_normal(B.shape[1])
        u /= np.linalg.norm(u)
        ds, rs = [], []
        for t in (1e-1, 1e-2, 1e-3, 1e-4):
            x = project_to_manifold(p, xs + t * u)
            ds.append(np.linalg.norm(x - xs))
            rs.append(np.linalg.norm(taylor_remainder(p, xs, x, H)))
        slopes.append(loglog_slope(ds, rs))
    s = min(slopes)
    return _report("taylor_remainder_slope", s, 1.9, s >= 1.9, 5, bt.seed)


def check_taylor_holdout(bt: Battery) -> CheckReport:
    p, xs = bt.small_problem, bt.small.x_star
    c1, c2 = calibrate_remainder(p, xs, sample_ball(xs, 1e-2, 1000, bt.rng(7)))
    ok = remainder_bound_holds(p, xs, sample_ball(xs, 1e-3, 200, bt.rng(8)), c1, c2)
    frac = float(ok.mean())
    return _report("taylor_remainder_holdout", frac, 1.0, frac >= 1.0, 200, bt.seed)


def check_expansion_holdout(bt: Battery) -> CheckReport:
    p, xs = bt.small_problem, bt.small.x_star
    H = riemannian_hessian(p, xs)
    c1, c2 = calibrate_expansion(p, xs, sample_on_manifold(p, xs, 1e-2, 500, bt.rng(9)), 1e-2)
    hold = sample_on_manifold(p, xs, 1e-3, 200, bt.rng(10))
    ok = []
    for x in hold:
        t = check_expansion_terms(p, xs, x, c1, c2, eps=1e-3, H_star=H)
        ok.append(max(abs(t.R1), abs(t.R2)) <= t.bound)
    frac = float(np.mean(ok))
    return _report("expansion_terms_holdout", frac, 1.0, frac >= 1.0, 200, bt.seed)


def _sphere_constants(bt: Battery):
    return bt.memo("sphere_constants", lambda: _compute_sphere_constants(bt))


def _compute_sphere_constants(bt: Battery, radius=0.1, pairs=500):
    inst = bt.small
    ec = estimate_constants(bt.small_problem, inst.x_star, radius, pairs, bt.seed)
    beta_F = 2.0
    gamma_F = 2.0 * (1.0 - radius)
    norm_A = float(np.max(np.abs(inst.eigvals)))
    L_f = norm_A * (1.0 + radius)
    beta_f = norm_A
    beta_P = 2.0 * beta_F / gamma_F
    return ec, {"beta_P": beta_P, "beta_D": 2.0 * beta_F / gamma_F ** 2,
                "beta_E": beta_P * L_f + beta_f}


def check_beta_P(bt: Battery) -> CheckReport:
    ec, ref = _sphere_constants(bt)
    r = ec.beta_P_hat / ref["beta_P"]
    return _report("perturbation_beta_P", r, 1.0, r <= 1.0, ec.n_samples, bt.seed)


def check_beta_D(bt: Battery) -> CheckReport:
    ec, ref = _sphere_constants(bt)
    r = ec.beta_D_hat / ref["beta_D"]
    return _report("perturbation_beta_D", r, 1.0, r <= 1.0, ec.n_samples, bt.seed)


def check_beta_E(bt: Battery) -> CheckReport:
    ec, ref = _sphere_constants(bt)
    r = ec.beta_E_hat / ref["beta_E"]
    return _report("lipschitz_beta_E", r, 1.0, r <= 1.0, ec.n_samples, bt.seed)


def check_normal_contraction(bt: Battery) -> CheckReport:
    p, xs = bt.mid_problem, bt.mid.x_star
    e = normal_contraction_exponent(p, xs, canonical_stepsize(p, xs), seed=bt.seed)
    return _report("normal_contraction_exponent", e, 0.95, e >= 0.95, 80, bt.seed)


def _local_runs(bt: Battery):
    return bt.memo("local_runs", lambda: _compute_local_runs(bt))


def _compute_local_runs(bt: Battery, n_starts=5):
    p, xs = bt.mid_problem, bt.mid.x_star
    eta = canonical_stepsize(p, xs)
    rng = bt.rng(11)
    cfg = SolverConfig(eta=eta, max_iters=200, grad_tol=0.0)
    trajs = [run_sqp(p, sample_initialization(xs, 1e-3, int(rng.integers(2**31))), cfg,
                     x_star=xs) for _ in range(n_starts)]
    return trajs, spectrum_at(p, xs)


def check_potential_contraction(bt: Battery) -> CheckReport:
    trajs, spec = _local_runs(bt)
    sigma = sigma_search(trajs, spec)
    viol = sum(check_local_rate(t, spec, sigma).violations for t in trajs)
    return _report("potential_contraction", viol, 0, viol == 0, len(trajs), bt.seed)


def check_asymptotic_rate(bt: Battery) -> CheckReport:
    trajs, spec = _local_runs(bt)
    target = 1.0 - 1.0 / spec.kappa_R
    dev = max(abs(check_local_rate(t, spec, 1.0).asymptotic_rate - target) for t in trajs)
    return _report("asymptotic_rate", dev, 0.05, dev <= 0.05, len(trajs), bt.seed)


def _far_start(bt: Battery, n):
    x = bt.rng(12).standard_normal(n)
    return x / np.linalg.norm(x)


def check_global_tube(bt: Battery) -> CheckReport:
    inst, p = bt.mid, bt.mid_problem
    eps = 1e-4
    eta = tube_stepsize(eps, 2.0, eigen_tube_gradient_bound(inst, eps))
    traj = run_sqp(p, _far_start(bt, inst.n),
                   SolverConfig(eta=eta, max_iters=2000, grad_tol=0.0, feas_cap=None))
    r = float(traj.column("feas").max() / eps)
    return _report("global_tube", r, 1.0, r <= 1.0, traj.iters, bt.seed)


def _tube_runs(inst, eps, seed, n_starts=3, iters=2000):
    p = eigenvalue_problem(inst)
    eta = tube_stepsize(eps, 2.0, eigen_tube_gradient_bound(inst, eps))
    cfg = SolverConfig(eta=eta, max_iters=iters, grad_tol=0.0, feas_cap=None)
    out = []
    for s in range(n_starts):
        x = np.random.default_rng([seed, s]).standard_normal(inst.n)
        out.append(run_sqp(p, x / np.linalg.norm(x), cfg))
    return out


def check_global_bound_holdout(bt: Battery) -> CheckReport:
    """Stationarity bound with ``K2`` fitted on one instance, asserted on another."""
    eps = 1e-4
    # eigenvalues are >= 0, so f >= 0 everywhere
    K2 = calibrate_global_constant(_tube_runs(bt.mid, eps, bt.seed), eps, 0.0)
    hold = make_instance(50, 10.0, bt.seed + 2)
    reps = [check_global(t, eps, 0.0, K2) for t in _tube_runs(hold, eps, bt.seed + 2)]
    worst = max(r.min_rgrad_sq / r.bound for r in reps)
    ok = worst <= 1.0 and all(r.stayed_in_tube for r in reps)
    return _report("global_bound_holdout", worst, 1.0, ok, len(reps), bt.seed)


def check_global_decay(bt: Battery) -> CheckReport:
    inst, p = bt.mid, bt.mid_problem
    ks = (100, 1000, 10000)
    sweep = decay_sweep(p, _far_start(bt, inst.n), ks, 1.0, 2.0,
                            eigen_tube_gradient_bound(inst, 1.0 / ks[0]))
    mins = [d["min_rgrad"] for d in sweep]
    s = loglog_slope(ks, mins)
    ok = s <= -0.2 and all(b <= a for a, b in zip(mins, mins[1:]))
    return _report("global_decay_slope", s, -0.2, ok, len(ks), bt.seed)


def check_sqp_rgd_slope(bt: Battery) -> CheckReport:
    p, xs = bt.mid_problem, bt.mid.x_star
    eta = canonical_stepsize(p, xs)
    x = project_to_manifold(p, sample_initialization(xs, 0.01, bt.seed))
    s = sqp_rgd_step_slope(p, x, tuple(eta * 10.0 ** -j for j in range(4)))
    return _report("sqp_rgd_step_slope", s, 1.9, s >= 1.9, 4, bt.seed)


CHECKS: dict[str, Callable[[Battery], CheckReport]] = {
    "fd_derivatives": check_fd_derivatives,
    "qp_oracle_equivalence": check_qp_oracle,
    "closed_form_eigen": check_closed_form,
    "projection_identities": check_projection_identities,
    "riemannian_hessian_fd": check_hessian_fd,
    "quadratic_attraction_slope": check_quadratic_attraction,
    "taylor_remainder_slope": check_taylor_slope,
    "taylor_remainder_holdout": check_taylor_holdout,
    "expansion_terms_holdout": check_expansion_holdout,
    "perturbation_beta_P": check_beta_P,
    "perturbation_beta_D": check_beta_D,
    "lipschitz_beta_E": check_beta_E,
    "normal_contraction_exponent": check_normal_contraction,
    "potential_contraction": check_potential_contraction,
    "asymptotic_rate": check_asymptotic_rate,
    "global_tube": check_global_tube,
    "global_bound_holdout": check_global_bound_holdout,
    "global_decay_slope": check_global_decay,
    "sqp_rgd_step_slope": check_sqp_rgd_slope,
}


def run_checks(seed: int = 0, problem: Optional[Problem] = None,
               names: Optional[list[str]] = None) -> list[CheckReport]:
    """Run the battery (or the named subset) and return the reports in order."""
    bt = Battery(seed, problem)
    names = list(CHECKS) if names is None else names
    return [CHECKS[name](bt) for name in names]
