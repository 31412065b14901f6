"""IMSE-optimal design instances from a truncated Karhunen-Loève expansion.

With a uniform measure on p candidate points, Γ/p = UΛUᵀ gives eigenfunctions
V = √p·U. Keeping the m leading pairs turns the random field into a Bayesian
linear model whose approximated IMSE is tr(C·M(w)⁻¹)/n with C = Λ_m, λ = 1/n
and a_i = Λ_m^{1/2}φ_{m,i}/σ_i.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from .data import read_csv_matrix
from .errors import ParseError, ShapeMismatch, TruncationDegenerate
from .models import FloatArray, ImseInstance, ImseSpec, ProblemInstance

LOGGER = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12


def matern12(distance: FloatArray, theta: float) -> FloatArray:
    return np.exp(-theta * distance)


def matern32(distance: FloatArray, theta: float) -> FloatArray:
    scaled = theta * distance
    return (1.0 + scaled) * np.exp(-scaled)


def matern52(distance: FloatArray, theta: float) -> FloatArray:
    scaled = theta * distance
    return (1.0 + scaled + scaled * scaled / 3.0) * np.exp(-scaled)


def sqexp(distance: FloatArray, theta: float) -> FloatArray:
    return np.exp(-((theta * distance) ** 2))


KERNELS: dict[str, Callable[[FloatArray, float], FloatArray]] = {
    "matern12": matern12,
    "matern32": matern32,
    "matern52": matern52,
    "sqexp": sqexp,
}


def kernel_matrix(points: FloatArray, theta: float, kernel: str = "matern32") -> FloatArray:
    return KERNELS[kernel](cdist(points, points), theta)


def candidate_points(spec: ImseSpec) -> FloatArray:
    if spec.points == "grid":
        axis = np.linspace(0.0, 1.0, spec.n_per_axis)
        mesh = np.meshgrid(*([axis] * spec.d), indexing="ij")
        return np.column_stack([coordinate.ravel() for coordinate in mesh])
    if spec.points == "file":
        points = read_csv_matrix(spec.points_file or "")
        if points.shape[1] != spec.d:
            raise ParseError(f"expected {spec.d} coordinates per point, found {points.shape[1]}", path=spec.points_file)
        return points
    engine = qmc.Sobol(spec.d, scramble=False) if spec.points == "sobol" else qmc.Halton(spec.d, scramble=False)
    with warnings.catch_warnings():
        # unscrambled prefixes of any length are allowed
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(spec.count)


def gen_imse(spec: ImseSpec, points: FloatArray | None = None) -> ImseInstance:
    """Build the L-optimal instance for the truncated IMSE criterion.

    Eigenvalues come back in decreasing order and sum to tr(Γ)/p.
    """
    points = candidate_points(spec) if points is None else np.asarray(points, dtype=np.float64)
    p = points.shape[0]
    if spec.m >= p:
        raise ShapeMismatch(f"Truncation level m={spec.m} must be below the number of candidates p={p}")
    gamma = kernel_matrix(points, spec.theta, spec.kernel)
    values, vectors = scipy.linalg.eigh(gamma / p)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    eigenfunctions = np.sqrt(p) * vectors[:, : spec.m]
    leading = values[: spec.m]

    sigma2 = np.diag(gamma) - np.einsum("ik,k,ik->i", eigenfunctions, leading, eigenfunctions)
    degenerate = np.flatnonzero(sigma2 <= SIGMA2_FLOOR)
    if degenerate.size:
        raise TruncationDegenerate(degenerate.tolist())

    root = np.sqrt(leading)
    A = (root[:, None] * eigenfunctions.T) / np.sqrt(sigma2)
    instance = ProblemInstance(A, np.diag(root), 1.0 / spec.budget)
    LOGGER.info(
        "IMSE instance: p=%d candidates, m=%d, retained spectrum %.4f, min sigma^2 %.3g",
        p, spec.m, float(leading.sum()), float(sigma2.min()),
    )
    return ImseInstance(
        instance=instance,
        points=points,
        eigenvalues=values,
        eigenfunctions=eigenfunctions,
        sigma2=sigma2,
        budget=spec.budget,
    )


def imse_approx(imse: ImseInstance, indices: Sequence[int]) -> float:
    """Approximated IMSE of the exact design observing the candidates ``indices``."""
    phi_rows = imse.eigenfunctions[list(indices)]
    precision = (phi_rows.T / imse.sigma2[list(indices)]) @ phi_rows
    m = imse.eigenfunctions.shape[1]
    precision[np.diag_indices(m)] += 1.0 / imse.eigenvalues[:m]
    return float(np.trace(scipy.linalg.inv(precision)))


def exact_design_weights(p: int, indices: Sequence[int]) -> FloatArray:
    counts = np.bincount(np.asarray(indices, dtype=int), minlength=p).astype(np.float64)
    return counts / counts.sum()
