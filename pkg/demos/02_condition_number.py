"""How the condition number sets the local linear rate.

Near the solution SQP contracts the distance to x_star by about
1 - 1/kappa_R per step with eta = 1/lambda_max.  Doubling kappa_R
therefore roughly doubles the iteration count to reach a fixed accuracy.
"""

import numpy as np

from manisolve import (SolverConfig, eigenvalue_problem, make_instance, run_sqp,
                       sample_initialization, spectrum_at)
from manisolve.analysis import check_local_rate, iterations_to_distance, sigma_search

N, RADIUS, SEEDS = 100, 0.01, range(8)

print(f"{'kappa':>6} {'median iters':>13} {'fitted rate':>12} {'1 - 1/kappa':>12} {'sigma':>7}")
prev = None
for kappa in (10.0, 20.0, 40.0):
    counts, trajs, spec = [], [], None
    for s in SEEDS:
        inst = make_instance(N, kappa, s)
        p = eigenvalue_problem(inst)
        spec = spectrum_at(p, inst.x_star)
        traj = run_sqp(p, sample_initialization(inst.x_star, RADIUS, 1000 + s),
                       SolverConfig(eta=1.0 / spec.lambda_max, max_iters=10000, grad_tol=1e-13),
                       x_star=inst.x_star)
        counts.append(iterations_to_distance(traj, 1e-8))
        trajs.append(traj)
    sigma = sigma_search(trajs, spec)
    rate = np.median([check_local_rate(t, spec, sigma).asymptotic_rate for t in trajs])
    med = float(np.median(counts))
    note = "" if prev is None else f"   x{med / prev:.2f}"
    print(f"{kappa:6g} {med:13g} {rate:12.5f} {1 - 1 / kappa:12.5f} {sigma:7.2g}{note}")
    prev = med
