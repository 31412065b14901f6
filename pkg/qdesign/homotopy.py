"""Exact regularization path of the standard lasso and the c-optimal designs it yields.

The path α ↦ x*(α) of ½‖Ax − c‖² + α‖x‖₁ is piecewise linear. Each point on
it also solves the quadratic lasso at λ = α/‖x*(α)‖₁, so interpolating between
two breakpoints gives exact quadratic-lasso solutions and exact designs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import PathologicalInstance, PathTooShort, ShapeMismatch
from .models import Breakpoint, Design, FloatArray, HomotopyPath, HomotopySolution, PathStatus, ProblemInstance

LOGGER = logging.getLogger(__name__)

TIE_TOL = 1e-12
SCHUR_TOL = 1e-10
ZERO_FLOOR = 1e-9
CONDITION_LIMIT = 1e12
REFACTOR_EVERY = 50

Face = frozenset[tuple[int, int]]


@dataclass(frozen=True)
class _Event:
    alpha: float
    index: int
    sign: int

    @property
    def is_exit(self) -> bool:
        return self.sign == 0


class _ActiveSet:
    """Active columns J, their signs and (A_JᵀA_J)⁻¹ kept current by rank-one updates."""

    def __init__(self, A: FloatArray) -> None:
        self.A = A
        self.columns: list[int] = []
        self.signs: list[int] = []
        self.gram_inv = np.zeros((0, 0))
        self.updates = 0

    def face(self) -> Face:
        return frozenset(zip(self.columns, self.signs))

    def face_after(self, event: _Event) -> Face:
        face = set(self.face())
        if event.is_exit:
            face = {(j, s) for j, s in face if j != event.index}
        else:
            face.add((event.index, event.sign))
        return frozenset(face)

    def _refactor(self) -> bool:
        A_J = self.A[:, self.columns]
        gram = A_J.T @ A_J
        if np.linalg.cond(gram) > CONDITION_LIMIT:
            return False
        self.gram_inv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), np.eye(len(self.columns)))
        return True

    def _counted(self) -> bool:
        self.updates += 1
        if self.updates % REFACTOR_EVERY == 0 and self.columns:
            return self._refactor()
        return True

    def add(self, j: int, sign: int) -> bool:
        a = self.A[:, j]
        cross = self.A[:, self.columns].T @ a
        z = self.gram_inv @ cross
        norm_sq = float(a @ a)
        schur = norm_sq - float(cross @ z)
        if schur <= SCHUR_TOL * norm_sq:
            return False
        n = len(self.columns)
        updated = np.empty((n + 1, n + 1))
        updated[:n, :n] = self.gram_inv + np.outer(z, z) / schur
        updated[:n, n] = -z / schur
        updated[n, :n] = -z / schur
        updated[n, n] = 1.0 / schur
        self.gram_inv = updated
        self.columns.append(j)
        self.signs.append(sign)
        return self._counted()

    def remove(self, j: int) -> bool:
        q = self.columns.index(j)
        keep = [i for i in range(len(self.columns)) if i != q]
        b = self.gram_inv[keep, q]
        beta = self.gram_inv[q, q]
        self.gram_inv = self.gram_inv[np.ix_(keep, keep)] - np.outer(b, b) / beta
        del self.columns[q]
        del self.signs[q]
        return self._counted()

    def apply(self, event: _Event) -> bool:
        return self.remove(event.index) if event.is_exit else self.add(event.index, event.sign)

    def direction(self, c: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Coefficients (u, d) with ξ_J(α) = u − α·d on the current face."""
        A_J = self.A[:, self.columns]
        return self.gram_inv @ (A_J.T @ c), self.gram_inv @ np.array(self.signs, dtype=np.float64)

    def embed(self, values: FloatArray, p: int) -> FloatArray:
        x = np.zeros(p)
        x[self.columns] = values
        return x


def _candidate_events(
    A: FloatArray, c: FloatArray, active: _ActiveSet, u: FloatArray, d: FloatArray, alpha: float, band: float
) -> list[_Event]:
    A_J = A[:, active.columns]
    base = A.T @ (c - A_J @ u)
    drift = A.T @ (A_J @ d)
    inactive = np.ones(A.shape[1], dtype=bool)
    inactive[active.columns] = False
    events: list[_Event] = []

    def admissible(value: float) -> bool:
        return math.isfinite(value) and -band <= value <= alpha + band

    with np.errstate(divide="ignore", invalid="ignore"):
        rising = base / (1.0 - drift)
        falling = -base / (1.0 + drift)
        leaving = u / d
    for j in np.flatnonzero(inactive):
        if admissible(rising[j]):
            events.append(_Event(float(rising[j]), int(j), 1))
        if admissible(falling[j]):
            events.append(_Event(float(falling[j]), int(j), -1))
    for position, j in enumerate(active.columns):
        if d[position] != 0.0 and admissible(leaving[position]):
            events.append(_Event(float(leaving[position]), j, 0))
    return events


def _select_event(events: list[_Event], active: _ActiveSet, visited: set[Face], band: float) -> _Event | None:
    """Largest α first; ties within the band go to the smallest index; visited faces are refused."""
    remaining = sorted(events, key=lambda event: -event.alpha)
    while remaining:
        top = remaining[0].alpha
        group = [event for event in remaining if event.alpha >= top - band]
        for event in sorted(group, key=lambda event: (event.index, -event.sign)):
            if active.face_after(event) not in visited:
                return event
        remaining = remaining[len(group):]
    return None


def lasso_path(inst: ProblemInstance, lambda_target: float = 0.0, full: bool = False) -> HomotopyPath:
    """Breakpoints of the lasso path from α₁ = ‖Aᵀc‖_∞ down to ``lambda_target``.

    Stops once a breakpoint has λ_k ≤ ``lambda_target`` (or at α = 0 with
    ``full``). Degenerate faces end the path early with status ``degenerate``.
    """
    if inst.r != 1:
        raise ShapeMismatch("The lasso path needs a vector target")
    if lambda_target < 0:
        raise ValueError(f"lambda_target must be nonnegative, got {lambda_target}")
    A, c, p = inst.A, inst.c, inst.p
    correlations = A.T @ c
    alpha = float(np.abs(correlations).max())
    if alpha == 0.0:
        raise PathologicalInstance("A^T c = 0: x = 0 is optimal for every lambda")
    top = alpha
    band = TIE_TOL * top

    first = int(np.flatnonzero(np.abs(correlations) >= alpha - band)[0])
    active = _ActiveSet(A)
    active.add(first, 1 if correlations[first] > 0 else -1)
    visited: set[Face] = {frozenset(), active.face()}
    breakpoints = [Breakpoint(alpha, np.zeros(p), math.inf, tuple(active.columns), tuple(active.signs))]
    stalls = 0
    status: PathStatus | None = None

    while status is None:
        u, d = active.direction(c)
        event = _select_event(_candidate_events(A, c, active, u, d, alpha, band), active, visited, band)
        # a full-rank face of size m fits c exactly, so further entries happen at α = 0
        saturated = event is not None and not event.is_exit and len(active.columns) >= inst.m
        if event is None or event.alpha <= band or saturated:
            x = active.embed(u, p)
            breakpoints.append(Breakpoint(0.0, x, 0.0, tuple(active.columns), tuple(active.signs)))
            status = "reached_zero"
            break

        if alpha - event.alpha <= band:
            stalls += 1
            LOGGER.debug("zero-progress event at alpha=%.17g on candidate %d", alpha, event.index)
            if stalls >= 3 * p or not active.apply(event):
                status = "degenerate"
                break
            visited.add(active.face())
            last = breakpoints[-1]
            breakpoints[-1] = Breakpoint(last.alpha, last.x, last.lam, tuple(active.columns), tuple(active.signs))
            continue

        stalls = 0
        resting = Breakpoint(0.0, active.embed(u, p), 0.0, tuple(active.columns), tuple(active.signs))
        alpha = max(event.alpha, 0.0)
        x = active.embed(u - alpha * d, p)
        if event.is_exit:
            x[event.index] = 0.0
        lam = alpha / float(np.abs(x).sum())
        applied = active.apply(event)
        if not applied and alpha <= ZERO_FLOOR * top:
            breakpoints.append(resting)
            status = "reached_zero"
            break
        visited.add(active.face())
        breakpoints.append(Breakpoint(alpha, x, lam, tuple(active.columns), tuple(active.signs)))
        LOGGER.debug("breakpoint %d: alpha=%.6g lambda=%.6g |J|=%d", len(breakpoints), alpha, lam, len(active.columns))
        if not applied:
            status = "degenerate"
        elif lam <= lambda_target and not full:
            status = "reached_lambda"

    if status == "degenerate":
        LOGGER.warning("lasso path stopped on a degenerate face after %d breakpoints", len(breakpoints))
    return HomotopyPath(tuple(breakpoints), status)


def _segment(path: HomotopyPath, lam: float) -> int:
    lambdas = path.lambdas
    for k in range(len(lambdas) - 1):
        if lambdas[k + 1] <= lam < lambdas[k]:
            return k
    raise PathTooShort(f"lambda={lam!r} lies below the computed path (smallest breakpoint lambda {lambdas[-1]!r})")


def _segment_coefficients(path: HomotopyPath, k: int, lam: float) -> tuple[float, float, Breakpoint, Breakpoint]:
    upper, lower = path.breakpoints[k], path.breakpoints[k + 1]
    return upper.alpha - lam * upper.l1, lam * lower.l1 - lower.alpha, upper, lower


def segment_weights(path: HomotopyPath, lam: float) -> Design:
    k = _segment(path, lam)
    to_lower, to_upper, upper, lower = _segment_coefficients(path, k, lam)
    w = to_lower * np.abs(lower.x) + to_upper * np.abs(upper.x)
    return Design(w / w.sum())


def path_solution(path: HomotopyPath, lam: float) -> FloatArray:
    k = _segment(path, lam)
    to_lower, to_upper, upper, lower = _segment_coefficients(path, k, lam)
    return (to_lower * lower.x + to_upper * upper.x) / (to_lower + to_upper)


def solve_homotopy(inst: ProblemInstance, lam: float) -> HomotopySolution:
    """Exact quadratic-lasso solution and c-optimal design at λ.

    When Aᵀc = 0 every design is optimal: x = 0 and the uniform design come back
    with ``pathological`` set.
    """
    if inst.r != 1:
        raise ShapeMismatch("The homotopy solver needs a vector target")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not np.any(inst.A.T @ inst.c):
        LOGGER.warning("A^T c = 0: returning x = 0 and the uniform design")
        return HomotopySolution(np.zeros(inst.p), Design.uniform(inst.p), None, 0, pathological=True)

    path = lasso_path(inst, lam)
    segment = _segment(path, lam) + 1
    x = path_solution(path, lam)
    LOGGER.info("homotopy solution on segment %d of %d (support %d)", segment, len(path.breakpoints) - 1, np.count_nonzero(x))
    return HomotopySolution(x, segment_weights(path, lam), path, segment)
