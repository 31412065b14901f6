from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    DesignTerms,
    as_dual_matrix,
    as_primal_matrix,
    certificate_from_design,
    certificate_from_primal,
    delta_from_terms,
    design_terms,
    hat_w,
    row_norms,
)
from .errors import InvalidCertificate
from .models import CERTIFICATE_TOL, Design, DualCertificate, FloatArray, ProblemInstance, ScreenRule, ScreeningMask

LOGGER = logging.getLogger(__name__)

TIE_TOL = 1e-12
ROUNDOFF = 1e-14


def _ties(g: FloatArray) -> NDArray[np.bool_]:
    return g >= float(g.max()) * (1.0 - TIE_TOL)


def _build_mask(scores: FloatArray, ties: NDArray[np.bool_], rule: ScreenRule, eps: float) -> ScreeningMask:
    eliminated = (scores > 0) & ~ties
    mask = ScreeningMask(
        eliminated=eliminated,
        rule=rule,
        eps_used=eps,
        index_map=np.flatnonzero(~eliminated),
        scores=scores,
    )
    LOGGER.debug("rule %s eliminated %d of %d candidates (eps=%.3g)", rule, mask.n_eliminated, scores.size, eps)
    return mask


def _screen(inst: ProblemInstance, cert: DualCertificate, rule: ScreenRule) -> ScreeningMask:
    eps = float(cert.eps)
    if not math.isfinite(eps) or eps < -CERTIFICATE_TOL:
        raise InvalidCertificate(f"Screening needs a nonnegative certificate bound, got {cert.eps!r}")
    Y = as_dual_matrix(inst, cert)
    g = row_norms(inst.A.T @ Y)
    top = float(g.max())
    # gaps below cancellation level are not certified zero
    eps = max(eps, ROUNDOFF * (float(np.sum(inst.K * inst.K)) + top * top / inst.lam))
    scores = top - g - np.sqrt(eps * (inst.col_sq + inst.lam))
    return _build_mask(scores, _ties(g), rule, eps)


def screen_d0(inst: ProblemInstance, cert: DualCertificate) -> ScreeningMask:
    """Eliminate candidates with ‖Aᵀy‖_∞ − |a_iᵀy| > √(ε(‖a_i‖²+λ)).

    Safe whenever ``cert.eps`` bounds 𝒟(y*) − 𝒟(y): no eliminated candidate
    carries weight in any optimal design. Candidates attaining the maximum
    correlation are always kept, and ε is never taken below the roundoff level
    of the dual objective.
    """
    return _screen(inst, cert, "d0")


def screen_d1(inst: ProblemInstance, x: ArrayLike) -> ScreeningMask:
    return _screen(inst, certificate_from_primal(inst, as_primal_matrix(inst, x)), "d1")


def screen_d2_terms(inst: ProblemInstance, terms: DesignTerms) -> ScreeningMask:
    return _screen(inst, certificate_from_design(inst, terms), "d2")


def screen_d2(inst: ProblemInstance, arg: Design | ArrayLike) -> ScreeningMask:
    """D0 with the design certificate y = λM(w)⁻¹c; a primal point is mapped through ŵ(x)."""
    w = arg if isinstance(arg, Design) else hat_w(as_primal_matrix(inst, arg))
    return screen_d2_terms(inst, design_terms(inst, w))


def bound_b_terms(inst: ProblemInstance, terms: DesignTerms) -> tuple[FloatArray, ScreeningMask]:
    delta = max(delta_from_terms(inst, terms), ROUNDOFF)
    big_phi = terms.phi
    curvature = inst.lam * terms.minv_k_sq
    correlation = np.sqrt(terms.corr_sq)
    head = math.sqrt(max(0.0, (1.0 + delta) * big_phi - curvature))
    spread = np.sqrt(delta * big_phi * (1.0 + inst.col_sq / inst.lam))
    values = head - spread - correlation
    mask = _build_mask(values, _ties(correlation), "b", inst.lam * delta * big_phi)
    return values, mask


def bound_B(inst: ProblemInstance, w: Design | ArrayLike) -> tuple[FloatArray, ScreeningMask]:
    """Per-candidate values B(M(w), H_i) and the mask B_i > 0.

    Needs a single factorization of M(w); λ·B_i coincides with the design-form
    D2 test value.
    """
    return bound_b_terms(inst, design_terms(inst, w))


def sup_ball_correlation(Y: ArrayLike, a: ArrayLike, R: float) -> tuple[float, FloatArray]:
    """sup ‖Zᵀa‖ over ‖Z − Y‖_F ≤ R, with a maximizer."""
    if R < 0:
        raise ValueError(f"Radius must be nonnegative, got {R}")
    Y_arr = np.asarray(Y, dtype=np.float64)
    a_vec = np.asarray(a, dtype=np.float64).ravel()
    Y2 = Y_arr[:, None] if Y_arr.ndim == 1 else Y_arr
    v = Y2.T @ a_vec
    norm_a = float(np.linalg.norm(a_vec))
    norm_v = float(np.linalg.norm(v))
    value = norm_v + R * norm_a
    if R == 0 or norm_a == 0.0:
        return value, Y_arr.copy()
    if norm_v > 0.0:
        direction = v / norm_v
    else:
        direction = np.zeros(Y2.shape[1])
        direction[0] = 1.0
    Z = Y2 + R * np.outer(a_vec / norm_a, direction)
    return value, Z[:, 0] if Y_arr.ndim == 1 else Z
