import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from manisolve import (DegenerateTangentError, MissingDerivativeError, Problem, RankDeficientError,
                       eigenvalue_problem, frame_at, hessian_spectrum, make_instance, pseudoinverse,
                       random_quadratic_problem, riemannian_hessian, tangent_basis,
                       tangent_normal_split)
from manisolve.geometry import rank_tolerance
from manisolve.problem import EigenInstance


def _diag_problem(d):
    d = np.asarray(d, dtype=float)
    return eigenvalue_problem(EigenInstance(A=np.diag(d), eigvals=np.sort(d),
                                            x_star=np.eye(d.size)[np.argmin(d)]))


@pytest.mark.parametrize("m,n", [(1, 5), (2, 5), (3, 7), (4, 4)])
def test_pseudoinverse_matches_numpy(m, n, rng):
    for _ in range(10):
        J = rng.standard_normal((m, n))
        ref = np.linalg.pinv(J)
        assert np.linalg.norm(pseudoinverse(J) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_pseudoinverse_moore_penrose_conditions(rng):
    J = rng.standard_normal((3, 8))
    Jp = pseudoinverse(J)
    np.testing.assert_allclose(J @ Jp, np.eye(3), atol=1e-13)
    np.testing.assert_allclose(Jp @ J @ Jp, Jp, atol=1e-13)
    np.testing.assert_allclose((Jp @ J).T, Jp @ J, atol=1e-13)


def test_rank_deficient_jacobian_rejected():
    J = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    with pytest.raises(RankDeficientError):
        pseudoinverse(J)
    with pytest.raises(RankDeficientError):
        pseudoinverse(np.zeros((1, 4)))
    with pytest.raises(RankDeficientError):
        pseudoinverse(np.ones((3, 2)))
    assert isinstance(RankDeficientError("x"), ValueError)


def test_rank_tolerance_scales_with_norm():
    assert rank_tolerance(np.eye(2)) == 1e-10
    assert rank_tolerance(1e3 * np.eye(2)) == pytest.approx(1e-7)


def test_frame_on_sphere_hand_values():
    p = _diag_problem([1.0, 2.0, 3.0])
    x = np.array([0.0, 2.0, 0.0])
    fr = frame_at(p, x)
    np.testing.assert_allclose(fr.P_perp, np.diag([0.0, 1.0, 0.0]), atol=1e-15)
    np.testing.assert_allclose(fr.P, np.diag([1.0, 0.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(fr.J_pinv, [[0.0], [0.25], [0.0]], atol=1e-15)
    np.testing.assert_allclose(fr.rgrad, 0.0, atol=1e-15)
    assert fr.Fx[0] == 3.0
    np.testing.assert_allclose(fr.feasibility_correction(), [0.0, 0.75, 0.0], atol=1e-15)
    assert fr.sigma_min_J == pytest.approx(4.0)
    # mu = J^+T grad f = 0.25 * 4
    np.testing.assert_allclose(fr.multipliers(), [1.0])


@pytest.mark.parametrize("m", [1, 2, 3])
def test_projection_identities_general(m, rng):
    p, x0 = random_quadratic_problem(9, m, 7 + m)
    fr = frame_at(p, x0 + 0.2 * rng.standard_normal(9))
    J = fr.J
    np.testing.assert_allclose(fr.P @ fr.P, fr.P, atol=1e-13)
    np.testing.assert_allclose(fr.P, fr.P.T, atol=1e-15)
    np.testing.assert_allclose(J @ fr.P, 0.0, atol=1e-12 * np.linalg.norm(J))
    np.testing.assert_allclose(fr.P_perp, np.linalg.pinv(J) @ J, atol=1e-12)
    np.testing.assert_allclose(J @ fr.rgrad, 0.0, atol=1e-11 * np.linalg.norm(J) * np.linalg.norm(fr.egrad))
    u = rng.standard_normal(9)
    np.testing.assert_allclose(fr.project_tangent(u) + fr.project_normal(u), u, atol=1e-14)
    np.testing.assert_allclose(fr.project_tangent(u), fr.P @ u, atol=1e-13)


def test_tangent_basis_orthonormal_kernel():
    p, x0 = random_quadratic_problem(8, 3, 1)
    fr = frame_at(p, x0)
    B = tangent_basis(fr)
    assert B.shape == (8, 5)
    np.testing.assert_allclose(B.T @ B, np.eye(5), atol=1e-14)
    np.testing.assert_allclose(fr.J @ B, 0.0, atol=1e-12)


def test_tangent_basis_square_system_degenerate():
    p, x0 = random_quadratic_problem(3, 3, 0)
    with pytest.raises(DegenerateTangentError):
        tangent_basis(frame_at(p, x0))


def test_riemannian_hessian_diagonal_sphere():
    # on the unit sphere at e_1 with A = diag(1,2,3): Hess = P (A - 1*I) P = diag(0, 1, 2)
    p = _diag_problem([1.0, 2.0, 3.0])
    xs = np.array([1.0, 0.0, 0.0])
    H = riemannian_hessian(p, xs)
    np.testing.assert_allclose(H, np.diag([0.0, 1.0, 2.0]), atol=1e-15)
    spec = hessian_spectrum(H, frame_at(p, xs))
    assert spec.lambda_min == pytest.approx(1.0)
    assert spec.lambda_max == pytest.approx(2.0)
    assert spec.kappa_R == pytest.approx(2.0)


def test_kappa_of_generated_instance():
    inst = make_instance(25, 13.0, 5)
    p = eigenvalue_problem(inst)
    spec = hessian_spectrum(riemannian_hessian(p, inst.x_star), frame_at(p, inst.x_star))
    assert spec.kappa_R == pytest.approx(13.0, rel=1e-9)
    assert spec.lambda_min == pytest.approx(1.0, rel=1e-9)


def test_riemannian_hessian_requires_second_derivatives():
    p = _diag_problem([1.0, 2.0])
    bare = Problem(n=2, m=1, f=p.f, grad_f=p.grad_f, F=p.F, jac_F=p.jac_F)
    with pytest.raises(MissingDerivativeError):
        riemannian_hessian(bare, np.array([1.0, 0.0]))


def test_tangent_normal_split_sphere():
    p = _diag_problem([1.0, 2.0, 3.0])
    fr = frame_at(p, np.array([1.0, 0.0, 0.0]))
    a, b = tangent_normal_split(fr, np.array([1.3, 0.4, 0.0]))
    assert a == pytest.approx(0.4) and b == pytest.approx(0.3)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 6), elements=st.floats(-10, 10)))
def test_pseudoinverse_property(J):
    if np.linalg.svd(J, compute_uv=False)[-1] <= 1e-3 * max(1.0, np.linalg.norm(J, 2)):
        return
    Jp = pseudoinverse(J)
    assert np.allclose(J @ Jp, np.eye(2), atol=1e-8)
    assert np.allclose(Jp, np.linalg.pinv(J), atol=1e-8 * max(1.0, np.linalg.norm(Jp)))


def test_pseudoinverse_scalar_row_and_padded_identity():
    np.testing.assert_allclose(pseudoinverse(np.array([[2.0, 0.0]])), [[0.5], [0.0]], atol=1e-15)
    J = np.hstack([np.eye(3), np.zeros((3, 2))])
    np.testing.assert_allclose(pseudoinverse(J), J.T, atol=1e-15)


def test_sphere_projections_on_and_off_manifold():
    p = _diag_problem([1.0, 2.0])
    fr = frame_at(p, np.array([1.0, 0.0]))
    np.testing.assert_allclose(fr.P, np.eye(2) - np.outer([1, 0], [1, 0]), atol=1e-15)
    fr = frame_at(p, np.array([2.0, 0.0]))
    np.testing.assert_allclose(fr.P_perp, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)


def test_eigen_hessian_matches_shifted_matrix_on_tangent():
    inst = make_instance(15, 6.0, 2)
    p = eigenvalue_problem(inst)
    fr = frame_at(p, inst.x_star)
    H = riemannian_hessian(p, inst.x_star)
    shifted = fr.P @ (inst.A - inst.eigvals[0] * np.eye(15)) @ fr.P
    np.testing.assert_allclose(H, shifted, atol=1e-10 * inst.kappa_R)
    B = tangent_basis(fr)
    assert np.linalg.eigvalsh(B.T @ H @ B).min() > 0


def test_hessian_symmetric_and_sandwiched_anywhere(rng):
    p, x0 = random_quadratic_problem(8, 2, 5)
    x = x0 + 0.3 * rng.standard_normal(8)
    H = riemannian_hessian(p, x)
    P = frame_at(p, x).P
    np.testing.assert_array_equal(H, H.T)
    np.testing.assert_allclose(P @ H @ P, H, atol=1e-10 * np.abs(H).max())


def test_identity_hessian_has_unit_condition_number():
    p = _diag_problem([1.0, 2.0, 3.0])
    fr = frame_at(p, np.array([1.0, 0.0, 0.0]))
    assert hessian_spectrum(fr.P, fr).kappa_R == pytest.approx(1.0)


def test_split_pythagoras_and_pure_tangent(rng):
    inst = make_instance(10, 4.0, 0)
    fr = frame_at(eigenvalue_problem(inst), inst.x_star)
    assert tangent_normal_split(fr, inst.x_star) == (0.0, 0.0)
    u = tangent_basis(fr) @ rng.standard_normal(9)
    u /= np.linalg.norm(u)
    a, b = tangent_normal_split(fr, inst.x_star + 0.01 * u)
    assert a == pytest.approx(0.01) and b < 1e-15
    x = inst.x_star + rng.standard_normal(10)
    a, b = tangent_normal_split(fr, x)
    assert a * a + b * b == pytest.approx(np.sum((x - inst.x_star) ** 2))


def test_rgrad_orthogonal_to_normals_on_manifold(rng):
    p, x0 = random_quadratic_problem(9, 3, 8)
    fr = frame_at(p, x0)
    assert np.abs(fr.J @ fr.rgrad).max() <= 1e-10 * np.linalg.norm(fr.J) * np.linalg.norm(fr.egrad)


@pytest.mark.parametrize("seed", range(3))
def test_generated_condition_number(seed):
    inst = make_instance(20, 50.0, seed)
    p = eigenvalue_problem(inst)
    spec = hessian_spectrum(riemannian_hessian(p, inst.x_star), frame_at(p, inst.x_star))
    assert abs(spec.kappa_R - 50.0) <= 1e-6
