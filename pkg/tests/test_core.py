from __future__ import annotations

import numpy as np
import pytest

from qdesign.core import (
    design_delta,
    dual_certificate,
    dual_objective,
    hat_w,
    hat_x,
    information_matrix,
    kkt_residual,
    optimality_report,
    phi,
    primal_objective,
    prior_transform,
)
from qdesign.data import random_instance
from qdesign.errors import InvalidCertificate, InvalidDesign, PriorNotPD, ShapeMismatch, ZeroPrimalPoint
from qdesign.models import Design, DualCertificate, PriorSpec, ProblemInstance
from qdesign.oracle import oracle_qlasso_signs


def test_vector_target_is_stored_as_single_column() -> None:
    inst = ProblemInstance(np.eye(2), [1.0, 0.0], 1.0)

    assert inst.vector_target
    assert inst.K.shape == (2, 1)
    assert np.array_equal(inst.c, [1.0, 0.0])
    assert np.array_equal(inst.target, [1.0, 0.0])


def test_instance_rejects_bad_shapes_and_lambda() -> None:
    with pytest.raises(ShapeMismatch):
        ProblemInstance(np.eye(2), np.ones(3), 1.0)
    with pytest.raises(ValueError):
        ProblemInstance(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ShapeMismatch):
        _ = ProblemInstance(np.eye(2), np.ones((2, 2)), 1.0).c


def test_design_validation() -> None:
    with pytest.raises(InvalidDesign):
        Design([1.2, -0.2])
    with pytest.raises(InvalidDesign):
        Design([0.5, 0.6])

    nearly = Design([0.5, 0.5 + 1e-8])
    assert nearly.w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(Design([1.0, -1e-13]).w, [1.0, 0.0])
    assert np.array_equal(Design.vertex(3, 1).support, [1])


def test_certificate_bound_must_be_nonnegative() -> None:
    with pytest.raises(InvalidCertificate):
        DualCertificate(np.ones(2), -1e-6, "from_primal")
    assert DualCertificate(np.ones(2), -1e-13, "from_primal").eps == 0.0


def test_prior_transform_identity_prior() -> None:
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    prior = PriorSpec(Sigma=np.eye(2), sigma2=2.0, n=4, A=A, target=np.array([1.0, 1.0]))

    inst = prior_transform(prior)

    assert np.allclose(inst.A, A, atol=1e-14)
    assert inst.lam == 0.5


def test_prior_transform_scalar_root() -> None:
    prior = PriorSpec(Sigma=4.0 * np.eye(2), sigma2=1.0, n=1, A=np.eye(2), target=np.array([1.0, 0.0]))

    inst = prior_transform(prior)

    assert np.allclose(inst.A[:, 0], [2.0, 0.0], atol=1e-14)
    assert np.allclose(inst.c, [2.0, 0.0], atol=1e-14)


def test_prior_transform_square_root_reconstructs_covariance() -> None:
    rng = np.random.default_rng(11)
    B = rng.standard_normal((3, 3))
    Sigma = B @ B.T + 0.5 * np.eye(3)
    prior = PriorSpec(Sigma=Sigma, sigma2=1.0, n=2, A=np.eye(3), target=rng.standard_normal(3))

    root = prior_transform(prior).A

    assert np.allclose(root, root.T, atol=1e-12)
    assert np.allclose(root @ root, Sigma, rtol=0.0, atol=1e-10)


def test_prior_transform_rejects_singular_covariance() -> None:
    prior = PriorSpec(Sigma=np.diag([1.0, 0.0]), sigma2=1.0, n=1, A=np.eye(2), target=np.ones(2))

    with pytest.raises(PriorNotPD):
        prior_transform(prior)


def test_information_matrix_orthonormal_and_vertex(symmetric: ProblemInstance) -> None:
    assert np.allclose(information_matrix(symmetric, Design.uniform(2)), np.diag([1.5, 1.5]))

    inst = random_instance(3, 4, seed=1)
    a = inst.A[:, 0]
    expected = np.outer(a, a) + inst.lam * np.eye(3)
    assert np.allclose(information_matrix(inst, Design.vertex(4, 0)), expected, atol=1e-14)


def test_information_matrix_eigenvalues_stay_above_lambda() -> None:
    rng = np.random.default_rng(12)
    for seed in range(50):
        inst = random_instance(5, 9, lam=float(rng.choice([0.01, 1.0, 50.0])), seed=seed)
        w = rng.dirichlet(np.ones(9))

        smallest = float(np.linalg.eigvalsh(information_matrix(inst, w)).min())

        assert smallest >= inst.lam * (1.0 - 1e-12)


def test_design_of_a_primal_point_is_no_worse() -> None:
    rng = np.random.default_rng(13)
    for seed in range(50):
        r = 1 if seed % 2 else 3
        inst = random_instance(4, 7, r=r, lam=float(rng.choice([0.1, 1.0, 10.0])), seed=seed)
        x = rng.standard_normal((7, r)) * (rng.random((7, 1)) < 0.6)
        x[0] += 1.0
        if r == 1:
            x = x[:, 0]

        value = primal_objective(inst, x)

        assert inst.lam * phi(inst, hat_w(x)) <= value * (1.0 + 1e-12)


def test_optimal_design_is_a_fixed_point_of_the_mappings() -> None:
    rng = np.random.default_rng(14)
    for seed in range(20):
        m, p = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        inst = random_instance(m, p, lam=float(rng.choice([0.1, 1.0, 10.0])), seed=seed)
        w_star = oracle_qlasso_signs(inst).w

        assert np.allclose(hat_w(hat_x(inst, w_star)).w, w_star.w, rtol=0.0, atol=1e-9)


def test_phi_on_diagonal_information(symmetric: ProblemInstance) -> None:
    assert phi(symmetric, Design.uniform(2)) == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_primal_objective_at_zero() -> None:
    inst = random_instance(4, 5, seed=2)
    assert primal_objective(inst, np.zeros(5)) == pytest.approx(float(inst.c @ inst.c), rel=1e-14)

    group = random_instance(4, 5, r=3, seed=2)
    assert primal_objective(group, np.zeros((5, 3))) == pytest.approx(float(np.sum(group.K**2)), rel=1e-14)


def test_dual_objective_cases() -> None:
    inst = random_instance(4, 6, lam=0.3, seed=3)
    top = float(np.abs(inst.A.T @ inst.c).max())

    assert dual_objective(inst, np.zeros(4)) == 0.0
    assert dual_objective(inst, inst.c) == pytest.approx(float(inst.c @ inst.c) - top**2 / inst.lam, rel=1e-12)


def test_single_candidate_closed_form(single: ProblemInstance) -> None:
    a, c, lam = single.A[:, 0], single.c, single.lam
    x_star = np.array([a @ c / (a @ a + lam)])

    assert kkt_residual(single, x_star) <= 1e-12
    assert dual_objective(single, c - a * x_star[0]) == pytest.approx(primal_objective(single, x_star), abs=1e-12)


def test_weak_duality_on_random_pairs() -> None:
    rng = np.random.default_rng(0)
    for seed in range(10):
        inst = random_instance(4, 6, r=1 + seed % 3, lam=float(rng.choice([0.1, 1.0, 10.0])), seed=seed)
        for _ in range(100):
            x = rng.standard_normal((inst.p, inst.r))
            y = rng.standard_normal((inst.m, inst.r))
            assert dual_objective(inst, y) <= primal_objective(inst, x) + 1e-12


def test_hat_w_cases() -> None:
    assert np.allclose(hat_w([2.0, -1.0, 0.0]).w, [2 / 3, 1 / 3, 0.0])
    assert np.array_equal(hat_w([0.0, 4.0, 0.0]).w, [0.0, 1.0, 0.0])
    assert np.allclose(hat_w(np.array([[3.0, 4.0], [0.0, 0.0]])).w, [1.0, 0.0])
    with pytest.raises(ZeroPrimalPoint):
        hat_w(np.zeros(3))


def test_hat_x_vanishes_off_design_support() -> None:
    inst = random_instance(3, 4, seed=4)

    x = hat_x(inst, Design([0.5, 0.0, 0.5, 0.0]))

    assert x.shape == (4,)
    assert x[1] == 0.0 and x[3] == 0.0


def test_certificate_at_zero() -> None:
    inst = random_instance(4, 5, lam=0.5, seed=5)
    top = float(np.abs(inst.A.T @ inst.c).max())

    cert = dual_certificate(inst, np.zeros(5))

    assert np.array_equal(cert.y, inst.c)
    assert cert.eps == pytest.approx(top**2 / inst.lam, rel=1e-12)
    assert cert.source == "from_primal"


def test_design_certificate_bounds_are_consistent() -> None:
    inst = random_instance(4, 6, r=2, seed=6)
    w = Design.uniform(6)

    cert = dual_certificate(inst, w, "from_design")

    assert cert.y.shape == (4, 2)
    assert cert.eps >= 0.0
    assert inst.lam * phi(inst, w) - dual_objective(inst, cert) == pytest.approx(cert.eps, abs=1e-12)
    with pytest.raises(ValueError):
        dual_certificate(inst, w, "elsewhere")  # type: ignore[arg-type]


def test_kkt_residual_at_zero(pathological: ProblemInstance) -> None:
    inst = random_instance(3, 5, seed=7)
    assert kkt_residual(inst, np.zeros(5)) == pytest.approx(float(np.abs(inst.A.T @ inst.c).max()))
    assert kkt_residual(pathological, np.zeros(3)) == 0.0


def test_design_delta_symmetric(symmetric: ProblemInstance) -> None:
    assert design_delta(symmetric, Design.uniform(2)) <= 1e-14
    assert design_delta(symmetric, Design.vertex(2, 0)) > 0.1


def test_optimality_report_handles_zero_point(pathological: ProblemInstance) -> None:
    report = optimality_report(pathological, np.zeros(3))
    assert report.delta == 0.0
    assert report.passed

    inst = random_instance(3, 4, seed=8)
    failed = optimality_report(inst, np.zeros(4))
    assert failed.delta == float("inf")
    assert not failed.passed
