"""Solve a small eigenvalue problem with first-order SQP.

We minimize 0.5 x^T A x on the unit sphere, whose minimizer is the
eigenvector of the smallest eigenvalue of A.  SQP starts off the sphere,
and each step combines a tangential gradient step with a Gauss-Newton pull
back toward the constraint, so feasibility and optimality improve together.
"""

import numpy as np

from manisolve import (SolverConfig, canonical_stepsize, eigenvalue_problem, make_instance,
                       run_sqp, sample_initialization)

inst = make_instance(n=40, kappa=8.0, seed=0)
problem = eigenvalue_problem(inst)
print(f"instance: n={inst.n}, kappa_R={inst.kappa_R:g}")

# start 0.3 away from the solution, generally off the sphere
x0 = sample_initialization(inst.x_star, 0.3, seed=1)
print(f"start: ||F(x0)|| = {np.linalg.norm(problem.F(x0)):.3e}")

eta = canonical_stepsize(problem, inst.x_star)
traj = run_sqp(problem, x0, SolverConfig(eta=eta, max_iters=2000), x_star=inst.x_star)

print(f"eta = 1/lambda_max = {eta:.4f}")
print(f"{'k':>5} {'f':>12} {'feas':>10} {'rgrad':>10} {'dist':>10}")
for r in traj.records[:: max(1, traj.iters // 12)]:
    print(f"{r.k:5d} {r.f_val:12.6e} {r.feas:10.2e} {r.rgrad_norm:10.2e} {r.dist:10.2e}")
print(f"termination: {traj.termination.value} after {traj.iters} iterations")

# sign of an eigenvector is arbitrary; the instance fixes x_star, SQP finds one of +-x_star
cos = abs(traj.x_final @ inst.x_star) / np.linalg.norm(traj.x_final)
print(f"|cos(x_final, x_star)| = {cos:.15f}")
