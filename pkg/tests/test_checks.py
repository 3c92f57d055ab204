import numpy as np
import pytest

from manisolve import Problem, eigenvalue_problem, make_instance
from manisolve.checks import CHECKS, closed_form_eigen_step, eigen_tube_gradient_bound, run_checks


@pytest.fixture(scope="module")
def reports():
    return run_checks(seed=0)


def test_battery_all_pass(reports):
    assert len(reports) >= 10
    assert [r.check_name for r in reports] == list(CHECKS)
    failed = [r.to_dict() for r in reports if not r.passed]
    assert not failed


def test_report_serialization_keys(reports):
    assert set(reports[0].to_dict()) == {"check_name", "pass", "statistic", "threshold",
                                         "n_samples", "seed"}


def test_battery_deterministic(reports):
    again = run_checks(seed=0, names=["qp_oracle_equivalence", "taylor_remainder_holdout"])
    by_name = {r.check_name: r for r in reports}
    for r in again:
        assert r == by_name[r.check_name]


def test_battery_detects_gradient_bug():
    good = eigenvalue_problem(make_instance(20, 10.0, 0))
    bad = Problem(n=good.n, m=good.m, f=good.f, grad_f=lambda x: good.grad_f(x) + 1e-3,
                  F=good.F, jac_F=good.jac_F, hess_f=good.hess_f, hess_F=good.hess_F)
    (rep,) = run_checks(seed=0, problem=bad, names=["fd_derivatives"])
    assert not rep.passed


def test_closed_form_on_sphere_is_pure_gradient_step():
    A = np.diag([0.0, 1.0, 3.0])
    x = np.array([0.6, 0.8, 0.0])
    # ||x|| = 1: x_+ = x - eta (I - x x^T) A x
    Ax = A @ x
    ref = x - 0.1 * (Ax - x * (x @ Ax))
    np.testing.assert_allclose(closed_form_eigen_step(A, x, 0.1), ref, atol=1e-15)


def test_tube_gradient_bound_is_supremum(rng):
    inst = make_instance(8, 6.0, 1)
    eps = 0.01
    G = eigen_tube_gradient_bound(inst, eps)
    top = np.linalg.eigh(inst.A)[1][:, -1] * np.sqrt(1 + eps)
    assert np.linalg.norm(inst.A @ top) == pytest.approx(G)
    for _ in range(100):
        x = rng.standard_normal(8)
        x *= np.sqrt(1 + rng.uniform(-eps, eps)) / np.linalg.norm(x)
        assert np.linalg.norm(inst.A @ x) <= G * (1 + 1e-12)
