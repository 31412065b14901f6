"""Bayesian c- and L-optimal experimental design through the quadratic lasso."""

__version__ = "0.1.0"

from .core import (
    design_delta,
    dual_certificate,
    dual_objective,
    hat_w,
    hat_x,
    information_matrix,
    kkt_residual,
    phi,
    primal_objective,
    prior_transform,
)
from .homotopy import lasso_path, path_solution, segment_weights, solve_homotopy
from .models import Design, DualCertificate, PriorSpec, ProblemInstance, SolverOptions
from .oracle import oracle_design_grid, oracle_design_simplex, oracle_qlasso_signs, verify_mappings, verify_optimal_pair
from .screening import bound_B, screen_d0, screen_d1, screen_d2, sup_ball_correlation
from .solvers import prox_sq_l1, run_with_screening, solve_cd, solve_fista, solve_fw, solve_mwu

__all__ = [
    "Design",
    "DualCertificate",
    "PriorSpec",
    "ProblemInstance",
    "SolverOptions",
    "bound_B",
    "design_delta",
    "dual_certificate",
    "dual_objective",
    "hat_w",
    "hat_x",
    "information_matrix",
    "kkt_residual",
    "lasso_path",
    "path_solution",
    "oracle_design_grid",
    "oracle_design_simplex",
    "oracle_qlasso_signs",
    "phi",
    "primal_objective",
    "prior_transform",
    "prox_sq_l1",
    "run_with_screening",
    "screen_d0",
    "screen_d1",
    "screen_d2",
    "segment_weights",
    "solve_cd",
    "solve_fista",
    "solve_fw",
    "solve_homotopy",
    "solve_mwu",
    "sup_ball_correlation",
    "verify_mappings",
    "verify_optimal_pair",
]
