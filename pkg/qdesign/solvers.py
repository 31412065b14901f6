"""Iterative solvers for the quadratic (group) lasso and the screening driver.

Primal-side solvers (coordinate descent, FISTA) iterate on x and stop on the
duality gap of y = c − Ax. Design-side solvers (multiplicative updates,
vertex-direction Frank-Wolfe) iterate on w and stop on δ(w). All four run
through :func:`run_with_screening`, which applies a safe screening rule every
``screen_period`` iterations and shrinks the working instance.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from typing import Protocol

import numpy as np
import scipy.linalg
import scipy.optimize
from numpy.typing import ArrayLike, NDArray

from .core import (
    DesignTerms,
    as_primal_matrix,
    certificate_from_design,
    certificate_from_primal,
    delta_from_terms,
    design_terms,
    hat_w,
    hat_x_matrix,
    primal_objective,
    row_norms,
    to_target_shape,
    weights_of,
)
from .errors import EmptySurvivorSet, NumericalUnderflow
from .models import (
    ALGORITHMS,
    Algorithm,
    Design,
    FloatArray,
    ProblemInstance,
    ScreeningMask,
    ScreenRule,
    SolverOptions,
    SolverTrace,
    TraceRecord,
)
from .screening import bound_B, bound_b_terms, screen_d0, screen_d1, screen_d2, screen_d2_terms

LOGGER = logging.getLogger(__name__)

TraceCallback = Callable[[TraceRecord], None]

UNDERFLOW_MASS = 1e-300
LINE_SEARCH_XTOL = 1e-12


def prox_sq_l1(v: ArrayLike, t: float) -> FloatArray:
    """argmin_z ½‖z − v‖² + t‖z‖₁², rows and ‖·‖₁,₂ for a matrix argument.

    The minimizer soft-thresholds at μ = 2t‖z‖₁; μ is found exactly over the
    prefix of the magnitudes sorted in decreasing order.
    """
    if not t > 0:
        raise ValueError(f"prox parameter must be positive, got {t}")
    V = np.asarray(v, dtype=np.float64)
    norms = np.abs(V) if V.ndim == 1 else row_norms(V)
    ordered = np.sort(norms)[::-1]
    counts = np.arange(1, ordered.size + 1)
    thresholds = 2.0 * t * np.cumsum(ordered) / (1.0 + 2.0 * t * counts)
    active = np.flatnonzero(ordered > thresholds)
    if active.size == 0:
        return np.zeros_like(V)
    mu = thresholds[active[-1]]
    scale = np.zeros_like(norms)
    positive = norms > mu
    scale[positive] = 1.0 - mu / norms[positive]
    return V * scale if V.ndim == 1 else V * scale[:, None]


class SolverEngine(Protocol):
    inst: ProblemInstance

    def step(self) -> None:
        ...

    def measure(self) -> tuple[float, float]:
        ...

    def screen(self, rule: ScreenRule) -> ScreeningMask | None:
        ...

    def restrict(self, keep: NDArray[np.bool_]) -> None:
        ...

    def full_gap(self, full: ProblemInstance, origin: NDArray[np.int_]) -> float:
        ...


class _PrimalEngine:
    def __init__(self, inst: ProblemInstance, initial: ArrayLike | None = None) -> None:
        self.inst = inst
        self.X = np.zeros((inst.p, inst.r)) if initial is None else as_primal_matrix(inst, initial).copy()

    def measure(self) -> tuple[float, float]:
        cert = certificate_from_primal(self.inst, self.X)
        return primal_objective(self.inst, self.X), cert.eps

    def screen(self, rule: ScreenRule) -> ScreeningMask | None:
        if rule == "d0":
            return screen_d0(self.inst, certificate_from_primal(self.inst, self.X))
        if rule == "d1":
            return screen_d1(self.inst, self.X)
        if not np.any(self.X):
            return None
        if rule == "d2":
            return screen_d2(self.inst, self.X)
        return bound_B(self.inst, hat_w(self.X))[1]

    def restrict(self, keep: NDArray[np.bool_]) -> None:
        self.inst = self.inst.restrict(keep)
        self.X = self.X[keep]

    def embed(self, full: ProblemInstance, origin: NDArray[np.int_]) -> FloatArray:
        X = np.zeros((full.p, full.r))
        X[origin] = self.X
        return X

    def full_gap(self, full: ProblemInstance, origin: NDArray[np.int_]) -> float:
        return certificate_from_primal(full, self.embed(full, origin)).eps


class CoordinateDescent(_PrimalEngine):
    """Cyclic block coordinate descent, one full sweep over rows per step.

    Row i is set to its exact minimizer shrink(A_iᵀR, λs)/(‖a_i‖²+λ), where R
    is the residual without row i and s the ℓ1,2 norm of the other rows.
    """

    def step(self) -> None:
        A, X, lam = self.inst.A, self.X, self.inst.lam
        col_sq = self.inst.col_sq
        R = self.inst.K - A @ X
        norms = row_norms(X)
        s = float(norms.sum())
        for i in range(self.inst.p):
            a = A[:, i]
            if norms[i] > 0:
                R += np.outer(a, X[i])
            s_rest = s - norms[i]
            v = a @ R
            size = float(np.linalg.norm(v))
            threshold = lam * s_rest
            if size > threshold:
                X[i] = (1.0 - threshold / size) * v / (col_sq[i] + lam)
                norms[i] = float(np.linalg.norm(X[i]))
                R -= np.outer(a, X[i])
            else:
                X[i] = 0.0
                norms[i] = 0.0
            s = max(s_rest, 0.0) + norms[i]


class Fista(_PrimalEngine):
    """Accelerated proximal gradient on ‖AX − K‖² + λ‖X‖₁,₂² with periodic momentum restarts."""

    def __init__(self, inst: ProblemInstance, initial: ArrayLike | None = None, restart: int = 200) -> None:
        super().__init__(inst, initial)
        self.restart = restart
        self._reset()

    def _reset(self) -> None:
        top = float(scipy.linalg.svdvals(self.inst.A)[0])
        self.lipschitz = 2.0 * top * top if top > 0 else 1.0
        self.Z = self.X.copy()
        self.momentum = 1.0
        self.count = 0

    def step(self) -> None:
        A, K = self.inst.A, self.inst.K
        gradient = 2.0 * A.T @ (A @ self.Z - K)
        X_new = prox_sq_l1(self.Z - gradient / self.lipschitz, self.inst.lam / self.lipschitz)
        momentum = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * self.momentum * self.momentum))
        self.Z = X_new + ((self.momentum - 1.0) / momentum) * (X_new - self.X)
        self.X = X_new
        self.momentum = momentum
        self.count += 1
        if self.count % self.restart == 0:
            self.Z = self.X.copy()
            self.momentum = 1.0

    def restrict(self, keep: NDArray[np.bool_]) -> None:
        super().restrict(keep)
        self._reset()


class _DesignEngine:
    def __init__(self, inst: ProblemInstance, initial: Design | ArrayLike | None = None) -> None:
        self.inst = inst
        w = np.full(inst.p, 1.0 / inst.p) if initial is None else weights_of(Design(weights_of(initial)))
        self._set_weights(np.array(w, dtype=np.float64))

    def _set_weights(self, w: FloatArray) -> None:
        self.w = w
        self.terms: DesignTerms = design_terms(self.inst, w)

    def measure(self) -> tuple[float, float]:
        return self.inst.lam * self.terms.phi, delta_from_terms(self.inst, self.terms)

    def screen(self, rule: ScreenRule) -> ScreeningMask | None:
        if rule == "d1":
            return screen_d1(self.inst, hat_x_matrix(self.inst, self.terms))
        if rule == "d0":
            return screen_d0(self.inst, certificate_from_design(self.inst, self.terms))
        if rule == "d2":
            return screen_d2_terms(self.inst, self.terms)
        return bound_b_terms(self.inst, self.terms)[1]

    def restrict(self, keep: NDArray[np.bool_]) -> None:
        w = self.w[keep]
        mass = float(w.sum())
        if mass < UNDERFLOW_MASS:
            raise NumericalUnderflow(f"Surviving design mass {mass:.3g} is too small to renormalize")
        self.inst = self.inst.restrict(keep)
        self._set_weights(w / mass)

    def embed(self, full: ProblemInstance, origin: NDArray[np.int_]) -> FloatArray:
        w = np.zeros(full.p)
        w[origin] = self.w
        return w

    def full_gap(self, full: ProblemInstance, origin: NDArray[np.int_]) -> float:
        return delta_from_terms(full, design_terms(full, self.embed(full, origin)))


class MultiplicativeWeights(_DesignEngine):
    """w_i ← w_i ‖KᵀM⁻¹a_i‖^(2·power), renormalized.

    power = 1/2 is the alternating minimization w ← ŵ(x̂(w)) and decreases φ
    monotonically; power = 1 is the classical update used for IMSE designs.
    """

    def __init__(self, inst: ProblemInstance, initial: Design | ArrayLike | None = None, power: float = 0.5) -> None:
        self.power = power
        super().__init__(inst, initial)

    def step(self) -> None:
        w = self.w * np.power(self.terms.corr_sq, self.power)
        total = float(w.sum())
        if total > 0:
            self._set_weights(w / total)


class FrankWolfe(_DesignEngine):
    """Vertex-direction method with exact line search and optional away steps."""

    def __init__(self, inst: ProblemInstance, initial: Design | ArrayLike | None = None, away_steps: bool = True) -> None:
        self.away_steps = away_steps
        super().__init__(inst, initial)

    def _slope(self, w: FloatArray, direction_matrix: FloatArray) -> Callable[[float], float]:
        A, K, lam = self.inst.A, self.inst.K, self.inst.lam
        base = (A * w) @ A.T

        def slope(gamma: float) -> float:
            M = base + gamma * direction_matrix
            M[np.diag_indices_from(M)] += lam
            B = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M, lower=True), K)
            return -float(np.sum(B * (direction_matrix @ B)))

        return slope

    def direction(self) -> tuple[FloatArray, float, int, bool]:
        """Search direction, largest admissible step, chosen vertex and whether it is an away step."""
        gains = self.terms.corr_sq
        level = self.terms.phi - self.inst.lam * self.terms.minv_k_sq
        toward = int(np.argmax(gains))
        direction = -self.w.copy()
        direction[toward] += 1.0
        if self.away_steps:
            support = np.flatnonzero(self.w > 0)
            away = int(support[np.argmin(gains[support])])
            weight = float(self.w[away])
            if level - gains[away] > gains[toward] - level and weight < 1.0:
                direction = self.w.copy()
                direction[away] -= 1.0
                return direction, weight / (1.0 - weight), away, True
        return direction, 1.0, toward, False

    def step(self) -> None:
        direction, gamma_max, vertex, away = self.direction()
        direction_matrix = (self.inst.A * direction) @ self.inst.A.T
        slope = self._slope(self.w, direction_matrix)
        if slope(0.0) >= 0.0:
            LOGGER.debug("vertex %d is not a descent direction; step skipped", vertex)
            return
        if slope(gamma_max) <= 0.0:
            gamma = gamma_max
        else:
            gamma = scipy.optimize.brentq(slope, 0.0, gamma_max, xtol=LINE_SEARCH_XTOL)
        w = np.clip(self.w + gamma * direction, 0.0, None)
        if away and gamma == gamma_max:
            w[vertex] = 0.0
        self._set_weights(w / w.sum())


def _make_engine(
    inst: ProblemInstance,
    algo: Algorithm,
    opts: SolverOptions,
    initial: Design | ArrayLike | None,
) -> SolverEngine:
    if algo == "cd":
        return CoordinateDescent(inst, initial)
    if algo == "fista":
        return Fista(inst, initial, restart=opts.fista_restart)
    if algo == "mwu":
        return MultiplicativeWeights(inst, initial, power=opts.mwu_power)
    if algo == "fw":
        return FrankWolfe(inst, initial, away_steps=opts.fw_away_steps)
    raise ValueError(f"Unsupported algorithm: {algo} (expected one of {', '.join(ALGORITHMS)})")


def run_with_screening(
    inst: ProblemInstance,
    algo: Algorithm,
    opts: SolverOptions | None = None,
    callback: TraceCallback | None = None,
    initial: Design | ArrayLike | None = None,
) -> tuple[FloatArray | Design, ScreeningMask, SolverTrace]:
    """Run ``algo`` with periodic safe screening.

    Every ``opts.screen_period`` iterations the rule is applied to the current
    iterate, eliminated candidates are dropped for good and design weights are
    renormalized over the survivors. Convergence on the reduced instance is
    confirmed on the full instance before returning. The solution is given back
    in the original indexing with zeros on eliminated candidates; the mask
    reports the accumulated eliminations.
    """
    opts = opts or SolverOptions()
    engine = _make_engine(inst, algo, opts, initial)
    trace = SolverTrace(algo=algo, p=inst.p)
    origin = np.arange(inst.p)
    scores = np.full(inst.p, np.nan)
    eps_used = 0.0
    started = time.perf_counter()
    iteration = 0

    def record() -> float:
        value, gap = engine.measure()
        row = TraceRecord(iteration, value, gap, engine.inst.p, time.perf_counter() - started)
        trace.records.append(row)
        if callback is not None:
            callback(row)
        return gap

    gap = record()
    while True:
        if gap <= opts.tol:
            full_gap = gap if origin.size == inst.p else engine.full_gap(inst, origin)
            if full_gap <= opts.tol:
                trace.converged = True
                break
            LOGGER.debug("reduced gap %.3g but full-instance gap %.3g; continuing", gap, full_gap)
        if iteration >= opts.max_iters:
            break
        engine.step()
        iteration += 1
        if opts.screen_rule is not None and iteration % opts.screen_period == 0:
            mask = engine.screen(opts.screen_rule)
            if mask is not None:
                scores[origin] = mask.scores
                eps_used = mask.eps_used
                if mask.n_eliminated:
                    keep = ~mask.eliminated
                    if not np.any(keep):
                        raise EmptySurvivorSet("Screening eliminated every candidate")
                    origin = origin[keep]
                    engine.restrict(keep)
                    LOGGER.debug("iteration %d: %d candidates remain", iteration, origin.size)
        gap = record()

    trace.full_gap = engine.full_gap(inst, origin)
    eliminated = np.ones(inst.p, dtype=bool)
    eliminated[origin] = False
    final_mask = ScreeningMask(eliminated, opts.screen_rule, eps_used, origin, scores)
    if trace.converged:
        LOGGER.info("%s converged after %d iterations (gap %.3g, %d survivors)", algo, iteration, gap, origin.size)
    else:
        LOGGER.warning("%s stopped after %d iterations without reaching tol=%.3g (gap %.3g)", algo, iteration, opts.tol, gap)

    full = engine.embed(inst, origin)
    if isinstance(engine, _DesignEngine):
        return Design(full), final_mask, trace
    return to_target_shape(inst, full), final_mask, trace


def solve_cd(
    inst: ProblemInstance, opts: SolverOptions | None = None, callback: TraceCallback | None = None
) -> tuple[FloatArray, SolverTrace]:
    x, _, trace = run_with_screening(inst, "cd", opts, callback)
    return x, trace


def solve_fista(
    inst: ProblemInstance, opts: SolverOptions | None = None, callback: TraceCallback | None = None
) -> tuple[FloatArray, SolverTrace]:
    x, _, trace = run_with_screening(inst, "fista", opts, callback)
    return x, trace


def solve_mwu(
    inst: ProblemInstance,
    opts: SolverOptions | None = None,
    callback: TraceCallback | None = None,
    initial: Design | None = None,
) -> tuple[Design, SolverTrace]:
    w, _, trace = run_with_screening(inst, "mwu", opts, callback, initial)
    return w, trace


def solve_fw(
    inst: ProblemInstance,
    opts: SolverOptions | None = None,
    callback: TraceCallback | None = None,
    initial: Design | None = None,
) -> tuple[Design, SolverTrace]:
    w, _, trace = run_with_screening(inst, "fw", opts, callback, initial)
    return w, trace
