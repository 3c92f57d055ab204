"""Numerical checks of the convergence theory on concrete instances.

Three claims are checked here:

* with the tube stepsize, every iterate from a far start stays within eps
  of the manifold;
* a tighter tube (eps = 1/k) drives the best Riemannian gradient norm
  down as the budget k grows;
* the full verification battery passes.  ``manisolve check`` runs it from
  the command line.
"""

import numpy as np

from manisolve import SolverConfig, eigenvalue_problem, make_instance, run_sqp
from manisolve.analysis import decay_sweep, tube_stepsize, loglog_slope
from manisolve.checks import eigen_tube_gradient_bound, run_checks

inst = make_instance(50, 10.0, seed=5)
p = eigenvalue_problem(inst)
x0 = np.random.default_rng(6).standard_normal(50)
x0 /= np.linalg.norm(x0)

eps = 1e-4
eta = tube_stepsize(eps, beta_F=2.0, G_f=eigen_tube_gradient_bound(inst, eps))
traj = run_sqp(p, x0, SolverConfig(eta=eta, max_iters=2000, grad_tol=0.0, feas_cap=None))
print(f"tube eps = {eps:g}, eta = {eta:.3e}: max ||F(x_k)|| = {traj.column('feas').max():.3e}")

ks = (100, 1000, 10000)
sweep = decay_sweep(p, x0, ks, c=1.0, beta_F=2.0,
                        G_f=eigen_tube_gradient_bound(inst, 1.0 / ks[0]))
for d in sweep:
    print(f"  k = {d['k']:6d}  eps = {d['eps']:.0e}  min ||grad|| = {d['min_rgrad']:.3e}")
print(f"log-log slope of min ||grad|| vs k: {loglog_slope(ks, [d['min_rgrad'] for d in sweep]):.3f}")

print("\nverification battery:")
for r in run_checks(seed=0):
    print(f"  {'PASS' if r.passed else 'FAIL'}  {r.check_name:<28} {r.statistic:.4g}")
