"""Brute-force reference solvers and optimality checks for small instances."""

from __future__ import annotations

import itertools
import logging
import math

import numpy as np
import scipy.optimize
from numpy.typing import ArrayLike

from .core import (
    as_primal_matrix,
    certificate_from_design,
    certificate_from_primal,
    delta_from_terms,
    design_terms,
    hat_w,
    hat_x_matrix,
    optimality_report,
    primal_objective,
    to_target_shape,
)
from .errors import ShapeMismatch, SolveFailure, TooLargeForOracle
from .models import Design, FloatArray, MappingReport, OptimalityReport, OracleSolution, ProblemInstance

LOGGER = logging.getLogger(__name__)

SIGN_ENUM_MAX_P = 12
GRID_MAX_P = 4
SIMPLEX_MAX_P = 12
MAPPINGS_MAX_P = 7
CONDITION_LIMIT = 1e12
KKT_SLACK = 1e-9
GRID_REFINE_STEPS = 200
GRID_CHUNK = 4096


def _require_vector_target(inst: ProblemInstance) -> None:
    if inst.r != 1:
        raise ShapeMismatch("This oracle needs a vector target")


def oracle_qlasso_signs(inst: ProblemInstance) -> OracleSolution:
    """Exact quadratic-lasso minimizer by enumerating supports and sign patterns.

    For support S and signs σ the stationarity system is
    (A_SᵀA_S + λσσᵀ)x_S = A_Sᵀc; a solution is kept when its signs match σ and
    the off-support KKT inequalities hold. All patterns of one support are
    solved as a single batch.
    """
    _require_vector_target(inst)
    if inst.p > SIGN_ENUM_MAX_P:
        raise TooLargeForOracle(f"Sign enumeration is limited to p <= {SIGN_ENUM_MAX_P}, got {inst.p}")
    A, c, lam, p = inst.A, inst.c, inst.lam, inst.p
    best_x = np.zeros(p)
    best_value = math.inf
    if not np.any(A.T @ c):
        best_value = primal_objective(inst, best_x)

    for size in range(1, min(p, inst.m + 1) + 1):
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=size)))
        for support in itertools.combinations(range(p), size):
            A_S = A[:, support]
            systems = A_S.T @ A_S + lam * signs[:, :, None] * signs[:, None, :]
            conditioned = np.linalg.cond(systems) <= CONDITION_LIMIT
            if not np.any(conditioned):
                continue
            rhs = np.broadcast_to(A_S.T @ c, (int(conditioned.sum()), size))[..., None]
            solutions = np.linalg.solve(systems[conditioned], rhs)[..., 0]
            consistent = np.all(np.sign(solutions) == signs[conditioned], axis=1)
            for x_S in solutions[consistent]:
                x = np.zeros(p)
                x[list(support)] = x_S
                residual = c - A @ x
                s = float(np.abs(x_S).sum())
                level = lam * s
                if float(np.abs(A.T @ residual).max()) > level + KKT_SLACK * (1.0 + level):
                    continue
                value = float(residual @ residual) + lam * s * s
                if value < best_value:
                    best_value, best_x = value, x

    if not math.isfinite(best_value):
        raise SolveFailure("No sign pattern satisfied the optimality conditions")
    w = hat_w(best_x) if np.any(best_x) else Design.uniform(p)
    return OracleSolution(
        x=best_x,
        w=w,
        value=best_value,
        certificate=certificate_from_primal(inst, best_x[:, None]),
        method="sign_enum",
    )


def simplex_grid(p: int, resolution: int) -> FloatArray:
    """All weight vectors with entries in {0, 1/resolution, ..., 1} summing to one."""
    rows = []
    for bars in itertools.combinations(range(resolution + p - 1), p - 1):
        edges = np.array((-1, *bars, resolution + p - 1))
        rows.append(np.diff(edges) - 1)
    return np.array(rows, dtype=np.float64) / resolution


def _batched_phi(inst: ProblemInstance, weights: FloatArray) -> FloatArray:
    values = np.empty(len(weights))
    eye = inst.lam * np.eye(inst.m)
    for start in range(0, len(weights), GRID_CHUNK):
        chunk = weights[start : start + GRID_CHUNK]
        M = np.einsum("ik,nk,jk->nij", inst.A, chunk, inst.A) + eye
        solved = np.linalg.solve(M, np.broadcast_to(inst.K, (len(chunk), *inst.K.shape)))
        values[start : start + GRID_CHUNK] = np.einsum("ir,nir->n", inst.K, solved)
    return values


def _design_solution(inst: ProblemInstance, w: FloatArray, method: str) -> OracleSolution:
    design = Design(w / w.sum())
    terms = design_terms(inst, design)
    return OracleSolution(
        x=to_target_shape(inst, hat_x_matrix(inst, terms)),
        w=design,
        value=inst.lam * terms.phi,
        certificate=certificate_from_design(inst, terms),
        method=method,  # type: ignore[arg-type]
    )


def oracle_design_grid(inst: ProblemInstance, resolution: int = 50) -> OracleSolution:
    """Minimize φ over the simplex grid of spacing 1/resolution, then refine.

    Refinement moves mass between pairs of candidates; the transfer step is
    halved whenever no pair improves φ.
    """
    if inst.p > GRID_MAX_P:
        raise TooLargeForOracle(f"Grid search is limited to p <= {GRID_MAX_P}, got {inst.p}")
    if resolution < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    grid = simplex_grid(inst.p, resolution)
    values = _batched_phi(inst, grid)
    w = grid[int(np.argmin(values))].copy()
    best = float(values.min())

    step = 1.0 / resolution
    pairs = [(i, j) for i in range(inst.p) for j in range(inst.p) if i != j]
    for _ in range(GRID_REFINE_STEPS):
        if not pairs:
            break
        trials = []
        for i, j in pairs:
            amount = min(step, w[j])
            trial = w.copy()
            trial[i] += amount
            trial[j] -= amount
            trials.append(trial)
        trial_values = _batched_phi(inst, np.array(trials))
        k = int(np.argmin(trial_values))
        if trial_values[k] < best:
            w, best = trials[k], float(trial_values[k])
        else:
            step *= 0.5
    return _design_solution(inst, w, "grid")


def oracle_design_simplex(inst: ProblemInstance) -> OracleSolution:
    """Minimize φ over the simplex with SLSQP and the analytic gradient; covers r > 1."""
    if inst.p > SIMPLEX_MAX_P:
        raise TooLargeForOracle(f"Simplex oracle is limited to p <= {SIMPLEX_MAX_P}, got {inst.p}")

    def objective(w: FloatArray) -> tuple[float, FloatArray]:
        terms = design_terms(inst, np.clip(w, 0.0, None))
        return terms.phi, -(terms.corr_sq + inst.lam * terms.minv_k_sq)

    result = scipy.optimize.minimize(
        objective,
        np.full(inst.p, 1.0 / inst.p),
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * inst.p,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones_like(w)}],
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    if not result.success:
        LOGGER.warning("SLSQP reported: %s", result.message)
    return _design_solution(inst, np.clip(result.x, 0.0, None), "simplex")


def verify_optimal_pair(inst: ProblemInstance, x: ArrayLike, tol: float = 1e-8) -> OptimalityReport:
    """Duality gap, KKT residual and δ(ŵ(x)) of a candidate solution; passes when all are ≤ tol."""
    return optimality_report(inst, as_primal_matrix(inst, x), tol)


def _close(a: float, b: float) -> float:
    return abs(a - b) / (1.0 + abs(b))


def verify_mappings(inst: ProblemInstance, tol: float = 1e-8, seed: int = 0, samples: int = 20) -> MappingReport:
    """Check the primal/design correspondences at the exact optimum.

    objective_equivalence: λφ(ŵ(x*)) = 𝓛(x*) and ŵ(x*) satisfies the
    equivalence theorem; fixed_point: 𝓛(x̂(w*)) = 𝓛(x*); dual_bridge:
    c − Ax̂(w) = λM(w)⁻¹c for random w; dual_uniqueness: c − Ax* = λM(w*)⁻¹c.
    """
    _require_vector_target(inst)
    if inst.p > MAPPINGS_MAX_P:
        raise TooLargeForOracle(f"Mapping checks are limited to p <= {MAPPINGS_MAX_P}, got {inst.p}")
    optimum = oracle_qlasso_signs(inst)
    x_star = optimum.x[:, None]
    pathological = not np.any(x_star)
    w_star = optimum.w
    terms = design_terms(inst, w_star)
    value = primal_objective(inst, x_star)
    scale = 1.0 + float(np.abs(inst.K).max())

    residuals = {
        "objective_equivalence": max(_close(inst.lam * terms.phi, value), delta_from_terms(inst, terms)),
        "fixed_point": _close(primal_objective(inst, hat_x_matrix(inst, terms)), value),
    }

    rng = np.random.default_rng(seed)
    bridge = 0.0
    for w in rng.dirichlet(np.ones(inst.p), size=samples):
        sample = design_terms(inst, w)
        y_primal = inst.K - inst.A @ hat_x_matrix(inst, sample)
        bridge = max(bridge, float(np.abs(y_primal - inst.lam * sample.minv_k).max()) / scale)
    residuals["dual_bridge"] = bridge
    residuals["dual_uniqueness"] = float(np.abs(inst.K - inst.A @ x_star - inst.lam * terms.minv_k).max()) / scale

    checks = {name: residual <= tol for name, residual in residuals.items()}
    return MappingReport(checks=checks, residuals=residuals, pathological=pathological)
