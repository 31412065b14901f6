from __future__ import annotations

import numpy as np
import pytest

from qdesign.core import phi, primal_objective
from qdesign.data import random_instance
from qdesign.errors import ShapeMismatch, TooLargeForOracle
from qdesign.models import ProblemInstance, SolverOptions
from qdesign.oracle import (
    oracle_design_grid,
    oracle_design_simplex,
    oracle_qlasso_signs,
    simplex_grid,
    verify_mappings,
    verify_optimal_pair,
)
from qdesign.solvers import solve_cd


def test_sign_enumeration_single_candidate(single: ProblemInstance) -> None:
    a, c = single.A[:, 0], single.c

    solution = oracle_qlasso_signs(single)

    assert solution.x[0] == pytest.approx(a @ c / (a @ a + single.lam), rel=1e-12)
    assert solution.method == "sign_enum"
    assert solution.certificate.eps <= 1e-9


def test_sign_enumeration_pathological(pathological: ProblemInstance) -> None:
    solution = oracle_qlasso_signs(pathological)

    assert not np.any(solution.x)
    assert solution.value == pytest.approx(1.0)
    assert np.allclose(solution.w.w, 1.0 / 3.0)


def test_sign_enumeration_orthonormal_pair() -> None:
    inst = ProblemInstance(np.eye(2), np.array([1.0, 2.0]), 1.0)

    solution = oracle_qlasso_signs(inst)

    assert solution.value == pytest.approx(3.0, rel=1e-12)
    assert np.allclose(solution.x, [0.0, 1.0])


def test_oracle_size_limits() -> None:
    with pytest.raises(TooLargeForOracle):
        oracle_qlasso_signs(random_instance(3, 13, seed=0))
    with pytest.raises(TooLargeForOracle):
        oracle_design_grid(random_instance(3, 5, seed=0))
    with pytest.raises(ShapeMismatch):
        oracle_qlasso_signs(random_instance(3, 4, r=2, seed=0))


def test_simplex_grid_enumerates_compositions() -> None:
    grid = simplex_grid(3, 4)

    assert grid.shape == (15, 3)
    assert np.allclose(grid.sum(axis=1), 1.0)
    assert np.array_equal(simplex_grid(1, 7), [[1.0]])


def test_grid_oracle_symmetric_and_single(symmetric: ProblemInstance, single: ProblemInstance) -> None:
    assert np.allclose(oracle_design_grid(symmetric, resolution=2).w.w, [0.5, 0.5])
    assert np.array_equal(oracle_design_grid(single, resolution=5).w.w, [1.0])


def test_grid_oracle_is_consistent_with_sign_enumeration() -> None:
    for seed in range(5):
        inst = random_instance(2, 3, lam=0.5, seed=seed)
        best = oracle_qlasso_signs(inst).value

        grid = oracle_design_grid(inst, resolution=50)

        assert grid.method == "grid"
        assert grid.value >= best - 1e-9
        assert grid.value <= best * (1.0 + 1e-4)


def test_simplex_oracle_matches_sign_enumeration() -> None:
    for seed in range(5):
        inst = random_instance(3, 5, lam=1.0, seed=seed)
        design = oracle_design_simplex(inst)

        assert design.w.w.sum() == pytest.approx(1.0, abs=1e-12)
        assert design.value == pytest.approx(oracle_qlasso_signs(inst).value, rel=1e-7)


@pytest.mark.parametrize("seed", range(50))
def test_block_cd_matches_simplex_oracle(seed: int) -> None:
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 5))
    p = int(rng.integers(3, 7))
    group = random_instance(m, p, r=3, lam=float(rng.choice([0.3, 1.0, 3.0])), seed=seed)

    X, _ = solve_cd(group, SolverOptions(tol=1e-12))
    design = oracle_design_simplex(group)

    assert group.lam * phi(group, design.w) == pytest.approx(design.value)
    assert design.value == pytest.approx(primal_objective(group, X), rel=1e-6)


def test_optimal_pair_report() -> None:
    inst = random_instance(4, 6, lam=0.5, seed=9)
    x_star = oracle_qlasso_signs(inst).x

    assert verify_optimal_pair(inst, x_star, 1e-8).passed
    assert not verify_optimal_pair(inst, np.zeros(6), 1e-8).passed
    noise = 1e-3 * np.random.default_rng(9).standard_normal(6)
    assert not verify_optimal_pair(inst, x_star + noise, 1e-8).passed


def test_mappings_on_symmetric_instance(symmetric: ProblemInstance) -> None:
    report = verify_mappings(symmetric, tol=1e-10)

    assert report.passed
    assert set(report.checks) == {"objective_equivalence", "fixed_point", "dual_bridge", "dual_uniqueness"}
    assert report.to_dict()["checks"]["dual_bridge"] == "pass"


def test_mappings_on_pathological_instance(pathological: ProblemInstance) -> None:
    report = verify_mappings(pathological)

    assert report.pathological
    assert report.passed


def test_mappings_hold_on_random_instances() -> None:
    rng = np.random.default_rng(5)
    for seed in range(49):
        m = int(rng.integers(2, 6))
        inst = random_instance(m, 5, lam=float([0.1, 1.0, 10.0][seed % 3]), seed=seed)

        report = verify_mappings(inst, tol=1e-8, seed=seed)

        assert report.passed, report.residuals


def test_mappings_limit() -> None:
    with pytest.raises(TooLargeForOracle):
        verify_mappings(random_instance(3, 8, seed=0))
