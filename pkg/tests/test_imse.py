from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from qdesign.core import phi
from qdesign.errors import ParseError, ShapeMismatch, TruncationDegenerate
from qdesign.imse import KERNELS, candidate_points, exact_design_weights, gen_imse, imse_approx, kernel_matrix
from qdesign.models import ImseSpec, SolverOptions
from qdesign.solvers import run_with_screening, solve_mwu


def test_kernels_are_one_at_zero_distance() -> None:
    for kernel in KERNELS.values():
        assert kernel(np.zeros(3), 7.0) == pytest.approx(np.ones(3))

    points = np.random.default_rng(0).random((6, 2))
    assert np.allclose(np.diag(kernel_matrix(points, 10.0)), 1.0)


def test_matern32_formula() -> None:
    assert KERNELS["matern32"](np.array([0.1]), 10.0)[0] == pytest.approx(2.0 * np.exp(-1.0))


def test_candidate_point_sets() -> None:
    grid = candidate_points(ImseSpec(d=2, n_per_axis=33))
    assert grid.shape == (1089, 2)
    assert grid.min() == 0.0 and grid.max() == 1.0

    for name in ("sobol", "halton"):
        points = candidate_points(ImseSpec(d=3, points=name, count=100))  # type: ignore[arg-type]
        assert points.shape == (100, 3)
        assert np.all((points >= 0.0) & (points < 1.0))


def test_points_file_dimension_is_checked(tmp_path: Path) -> None:
    path = tmp_path / "points.csv"
    path.write_text("0.1,0.2,0.3\n0.4,0.5,0.6\n", encoding="utf-8")

    with pytest.raises(ParseError):
        candidate_points(ImseSpec(d=2, points="file", points_file=str(path)))


def test_grid_instance_spectrum() -> None:
    imse = gen_imse(ImseSpec(d=2, n_per_axis=9, theta=10.0, m=10, budget=10))
    inst = imse.instance

    assert inst.A.shape == (10, 81)
    assert inst.lam == pytest.approx(0.1)
    assert np.all(np.diff(imse.eigenvalues) <= 1e-15)
    assert imse.eigenvalues.sum() == pytest.approx(1.0)
    assert np.allclose(inst.K, np.diag(np.sqrt(imse.eigenvalues[:10])))
    assert np.all(imse.sigma2 > 0)


def test_criterion_matches_approximated_imse() -> None:
    imse = gen_imse(ImseSpec(d=2, n_per_axis=7, theta=5.0, m=6, budget=10))
    indices = [0, 3, 3, 10, 17, 24, 30, 41, 45, 48]

    w = exact_design_weights(imse.instance.p, indices)

    assert w.sum() == pytest.approx(1.0)
    assert phi(imse.instance, w) == pytest.approx(imse.budget * imse_approx(imse, indices), rel=1e-10)


def test_mild_truncation_is_degenerate() -> None:
    spec = ImseSpec(d=1, n_per_axis=20, theta=1.0, kernel="sqexp", m=15)

    with pytest.raises(TruncationDegenerate) as info:
        gen_imse(spec)
    assert info.value.indices


def test_truncation_must_leave_candidates() -> None:
    with pytest.raises(ShapeMismatch):
        gen_imse(ImseSpec(d=1, n_per_axis=5, m=5))


def test_spec_validation() -> None:
    with pytest.raises(ValueError):
        ImseSpec(kernel="cubic")  # type: ignore[arg-type]
    with pytest.raises(ValueError):
        ImseSpec(points="file")


@pytest.mark.slow
def test_screened_mwu_on_imse_grid() -> None:
    inst = gen_imse(ImseSpec(d=2, n_per_axis=9, theta=10.0, m=10, budget=10)).instance
    opts = SolverOptions(tol=1e-6, max_iters=500_000, mwu_power=1.0)

    w_bare, bare = solve_mwu(inst, opts)
    w, mask, trace = run_with_screening(
        inst, "mwu", SolverOptions(tol=1e-6, max_iters=500_000, mwu_power=1.0, screen_rule="d2", screen_period=100)
    )

    assert bare.converged and trace.converged
    assert w.w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(np.flatnonzero(w.w > 1e-3), np.flatnonzero(w_bare.w > 1e-3))
    assert mask.n_eliminated > 0
