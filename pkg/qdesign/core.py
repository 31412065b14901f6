"""Objectives, primal/design mappings and optimality certificates.

Every quantity is computed in the matrix (L-optimal) form with K stored as an
m×r array; the c-optimal case is r = 1 and results are handed back as vectors
when the instance was built from a vector target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from .errors import InvalidDesign, PriorNotPD, ShapeMismatch, SolveFailure, ZeroPrimalPoint
from .models import Design, DualCertificate, FloatArray, OptimalityReport, PriorSpec, ProblemInstance

CertificateMode = Literal["from_primal", "from_design"]

PRIOR_PD_TOL = 1e-10
PRIOR_CLAMP = 1e-14


def weights_of(w: Design | ArrayLike) -> FloatArray:
    return w.w if isinstance(w, Design) else np.asarray(w, dtype=np.float64)


def as_primal_matrix(inst: ProblemInstance, x: ArrayLike) -> FloatArray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (inst.p, inst.r):
        raise ShapeMismatch(f"Primal point has shape {np.shape(x)}, expected ({inst.p}, {inst.r})")
    if not np.all(np.isfinite(X)):
        raise ValueError("Primal point must be finite")
    return X


def as_dual_matrix(inst: ProblemInstance, y: DualCertificate | ArrayLike) -> FloatArray:
    Y = y.Y if isinstance(y, DualCertificate) else np.asarray(y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape != (inst.m, inst.r):
        raise ShapeMismatch(f"Dual point has shape {Y.shape}, expected ({inst.m}, {inst.r})")
    return Y


def to_target_shape(inst: ProblemInstance, X: FloatArray) -> FloatArray:
    return X[:, 0].copy() if inst.vector_target else X


def row_norms(X: FloatArray) -> FloatArray:
    return np.sqrt(np.einsum("ij,ij->i", X, X))


@dataclass(frozen=True, eq=False)
class DesignTerms:
    """Quantities shared by every design-side computation at a fixed w.

    ``corr_sq[i]`` is ‖KᵀM⁻¹a_i‖², ``minv_k_sq`` is ‖M⁻¹K‖_F² and ``phi`` is
    tr(KᵀM⁻¹K); all come from one Cholesky factorization of M(w).
    """

    w: FloatArray
    factor: tuple[FloatArray, bool]
    minv_k: FloatArray
    corr: FloatArray
    corr_sq: FloatArray
    minv_k_sq: float
    phi: float

    def solve(self, rhs: FloatArray) -> FloatArray:
        return scipy.linalg.cho_solve(self.factor, rhs)


def _check_weights(inst: ProblemInstance, w: Design | ArrayLike) -> FloatArray:
    weights = weights_of(w)
    if weights.shape != (inst.p,):
        raise ShapeMismatch(f"Design has {weights.size} weights for {inst.p} candidates")
    if not isinstance(w, Design) and (np.any(weights < 0) or not np.all(np.isfinite(weights))):
        raise InvalidDesign("Design weights must be finite and nonnegative")
    return weights


def information_matrix(inst: ProblemInstance, w: Design | ArrayLike) -> FloatArray:
    weights = _check_weights(inst, w)
    M = (inst.A * weights) @ inst.A.T
    M[np.diag_indices_from(M)] += inst.lam
    return 0.5 * (M + M.T)


def design_terms(inst: ProblemInstance, w: Design | ArrayLike) -> DesignTerms:
    weights = _check_weights(inst, w)
    M = information_matrix(inst, weights)
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"Information matrix factorization failed: {exc}") from exc
    minv_k = scipy.linalg.cho_solve(factor, inst.K, check_finite=False)
    corr = inst.A.T @ minv_k
    return DesignTerms(
        w=weights,
        factor=factor,
        minv_k=minv_k,
        corr=corr,
        corr_sq=np.einsum("ij,ij->i", corr, corr),
        minv_k_sq=float(np.sum(minv_k * minv_k)),
        phi=float(np.sum(inst.K * minv_k)),
    )


def phi(inst: ProblemInstance, w: Design | ArrayLike) -> float:
    """tr(KᵀM(w)⁻¹K); cᵀM(w)⁻¹c for a vector target."""
    return design_terms(inst, w).phi


def primal_objective(inst: ProblemInstance, x: ArrayLike) -> float:
    X = as_primal_matrix(inst, x)
    residual = inst.K - inst.A @ X
    s = float(row_norms(X).sum())
    return float(np.sum(residual * residual)) + inst.lam * s * s


def dual_objective(inst: ProblemInstance, y: DualCertificate | ArrayLike) -> float:
    Y = as_dual_matrix(inst, y)
    diff = Y - inst.K
    G = inst.A.T @ Y
    top = float(np.max(np.einsum("ij,ij->i", G, G)))
    return float(np.sum(inst.K * inst.K) - np.sum(diff * diff)) - top / inst.lam


def hat_w(x: ArrayLike) -> Design:
    X = np.asarray(x, dtype=np.float64)
    norms = np.abs(X) if X.ndim == 1 else row_norms(X)
    total = float(norms.sum())
    if total == 0.0:
        raise ZeroPrimalPoint("hat_w is undefined at x = 0")
    return Design(norms / total)


def hat_x_matrix(inst: ProblemInstance, terms: DesignTerms) -> FloatArray:
    return terms.w[:, None] * terms.corr


def hat_x(inst: ProblemInstance, w: Design | ArrayLike) -> FloatArray:
    """x̂_i(w) = w_i a_iᵀM(w)⁻¹K, zero wherever w_i = 0."""
    return to_target_shape(inst, hat_x_matrix(inst, design_terms(inst, w)))


def certificate_from_primal(inst: ProblemInstance, X: FloatArray) -> DualCertificate:
    Y = inst.K - inst.A @ X
    eps = primal_objective(inst, X) - dual_objective(inst, Y)
    return DualCertificate(to_target_shape(inst, Y), max(eps, 0.0), "from_primal")


def certificate_from_design(inst: ProblemInstance, terms: DesignTerms) -> DualCertificate:
    Y = inst.lam * terms.minv_k
    eps = inst.lam * terms.phi - dual_objective(inst, Y)
    return DualCertificate(to_target_shape(inst, Y), max(eps, 0.0), "from_design")


def dual_certificate(
    inst: ProblemInstance,
    arg: Design | ArrayLike,
    mode: CertificateMode = "from_primal",
) -> DualCertificate:
    """Dual point with a certified bound on its suboptimality.

    ``from_primal`` uses y = c − Ax and the duality gap; ``from_design`` uses
    y = λM(w)⁻¹c and λφ(w) − 𝒟(y). A design passed in primal mode is mapped
    through x̂(w) and a primal point passed in design mode through ŵ(x).
    """
    if mode == "from_primal":
        if isinstance(arg, Design):
            return certificate_from_primal(inst, hat_x_matrix(inst, design_terms(inst, arg)))
        return certificate_from_primal(inst, as_primal_matrix(inst, arg))
    if mode == "from_design":
        w = arg if isinstance(arg, Design) else hat_w(as_primal_matrix(inst, arg))
        return certificate_from_design(inst, design_terms(inst, w))
    raise ValueError(f"Unsupported certificate mode: {mode}")


def kkt_residual(inst: ProblemInstance, x: ArrayLike) -> float:
    X = as_primal_matrix(inst, x)
    G = inst.A.T @ (inst.K - inst.A @ X)
    g = row_norms(G)
    x_norms = row_norms(X)
    level = inst.lam * float(x_norms.sum())
    residual = abs(float(g.max()) - level)
    support = x_norms > 0
    if np.any(support):
        directions = X[support] / x_norms[support, None]
        residual = max(residual, float(row_norms(G[support] - level * directions).max()))
    if not np.all(support):
        residual = max(residual, float(np.maximum(g[~support] - level, 0.0).max()))
    return residual


def delta_from_terms(inst: ProblemInstance, terms: DesignTerms) -> float:
    if terms.phi <= 0.0:
        return 0.0
    top = float(terms.corr_sq.max()) + inst.lam * terms.minv_k_sq
    return max(top / terms.phi - 1.0, 0.0)


def design_delta(inst: ProblemInstance, w: Design | ArrayLike) -> float:
    """Largest relative violation of the equivalence theorem; 0 exactly at optimal designs."""
    return delta_from_terms(inst, design_terms(inst, w))


def optimality_report(inst: ProblemInstance, x: ArrayLike, tol: float = 1e-8) -> OptimalityReport:
    X = as_primal_matrix(inst, x)
    cert = certificate_from_primal(inst, X)
    primal = primal_objective(inst, X)
    try:
        delta = design_delta(inst, hat_w(X))
    except ZeroPrimalPoint:
        pathological = float(np.abs(inst.A.T @ inst.K).max()) == 0.0
        delta = 0.0 if pathological else float("inf")
    return OptimalityReport(
        primal_value=primal,
        dual_value=dual_objective(inst, cert),
        gap=cert.eps,
        kkt_residual=kkt_residual(inst, X),
        delta=delta,
        tol=tol,
    )


def prior_transform(prior: PriorSpec) -> ProblemInstance:
    """Standardize a Bayesian model to Σ = I: a_i′ = Σ^{1/2}a_i, c′ = Σ^{1/2}c, λ = σ²/n."""
    values, vectors = scipy.linalg.eigh(prior.Sigma)
    top = float(values.max())
    if top <= 0.0 or float(values.min()) <= PRIOR_PD_TOL * top:
        raise PriorNotPD(f"Prior covariance is not positive definite (eigenvalues in [{values.min():.3g}, {top:.3g}])")
    root = (vectors * np.sqrt(np.maximum(values, PRIOR_CLAMP * top))) @ vectors.T
    root = 0.5 * (root + root.T)
    return ProblemInstance(root @ prior.A, root @ prior.target, prior.sigma2 / prior.n)
