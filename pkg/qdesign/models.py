from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidCertificate, InvalidDesign, ShapeMismatch

FloatArray = NDArray[np.float64]

CertificateSource = Literal["from_primal", "from_design"]
ScreenRule = Literal["d0", "d1", "d2", "b"]
Algorithm = Literal["cd", "mwu", "fista", "fw"]
PathStatus = Literal["reached_lambda", "reached_zero", "degenerate"]
OracleMethod = Literal["sign_enum", "grid", "simplex"]
Kernel = Literal["matern12", "matern32", "matern52", "sqexp"]
PointSet = Literal["grid", "sobol", "halton", "file"]
TargetKind = Literal["c", "K"]

SCREEN_RULES: tuple[str, ...] = ("d0", "d1", "d2", "b")
ALGORITHMS: tuple[str, ...] = ("cd", "mwu", "fista", "fw")
PRIMAL_SIDE: frozenset[str] = frozenset({"cd", "fista"})

DESIGN_TOL = 1e-12
RENORMALIZE_TOL = 1e-6
CERTIFICATE_TOL = 1e-12


def _readonly(values: Any) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Standardized design problem: candidates A (m×p), target K (m×r), penalty λ.

    A 1-D target is the c-optimal case; it is stored as an m×1 matrix with
    ``vector_target`` set so results can be handed back as vectors.
    """

    A: FloatArray
    K: FloatArray
    lam: float
    vector_target: bool = False

    def __post_init__(self) -> None:
        A = _readonly(self.A)
        K = np.array(self.K, dtype=np.float64)
        vector_target = self.vector_target
        if K.ndim == 1:
            K = K[:, None]
            vector_target = True
        K.setflags(write=False)
        if A.ndim != 2 or K.ndim != 2:
            raise ShapeMismatch(f"A must be m×p and the target m or m×r, got {A.shape} and {K.shape}")
        if min(A.shape) < 1 or K.shape[1] < 1:
            raise ShapeMismatch(f"Empty problem: A {A.shape}, target {K.shape}")
        if K.shape[0] != A.shape[0]:
            raise ShapeMismatch(f"Target has {K.shape[0]} rows but A has {A.shape[0]}")
        if vector_target and K.shape[1] != 1:
            raise ShapeMismatch("A vector target must have a single column")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(K))):
            raise ValueError("Problem data must be finite")
        lam = float(self.lam)
        if not (math.isfinite(lam) and lam > 0):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "vector_target", vector_target)

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @property
    def p(self) -> int:
        return int(self.A.shape[1])

    @property
    def r(self) -> int:
        return int(self.K.shape[1])

    @property
    def c(self) -> FloatArray:
        if self.r != 1:
            raise ShapeMismatch(f"Instance has an m×{self.r} target, not a vector c")
        return self.K[:, 0]

    @property
    def target(self) -> FloatArray:
        return self.K[:, 0] if self.vector_target else self.K

    @cached_property
    def col_sq(self) -> FloatArray:
        return _readonly(np.einsum("ij,ij->j", self.A, self.A))

    def restrict(self, keep: NDArray[np.bool_] | NDArray[np.int_]) -> ProblemInstance:
        return ProblemInstance(self.A[:, keep], self.K, self.lam, self.vector_target)

    def to_dict(self) -> dict[str, Any]:
        return {"m": self.m, "p": self.p, "r": self.r, "lambda": self.lam, "vector_target": self.vector_target}


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Raw Bayesian model: prior covariance Σ, noise variance σ², budget n."""

    Sigma: FloatArray
    sigma2: float
    n: int
    A: FloatArray
    target: FloatArray

    def __post_init__(self) -> None:
        Sigma = _readonly(self.Sigma)
        A = _readonly(self.A)
        m = A.shape[0] if A.ndim == 2 else -1
        if Sigma.shape != (m, m):
            raise ShapeMismatch(f"Sigma must be {m}×{m}, got {Sigma.shape}")
        scale = max(float(np.max(np.abs(Sigma))), 1.0)
        if not np.allclose(Sigma, Sigma.T, rtol=0.0, atol=1e-10 * scale):
            raise ValueError("Sigma must be symmetric")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "target", _readonly(self.target))
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True, eq=False)
class Design:
    """Weights on the probability simplex over the p candidates."""

    w: FloatArray

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InvalidDesign(f"Design weights must be a non-empty vector, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidDesign("Design weights must be finite")
        if w.min() < -DESIGN_TOL:
            raise InvalidDesign(f"Negative design weight {w.min():.3g}")
        w = np.clip(w, 0.0, None)
        total = float(w.sum())
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise InvalidDesign(f"Design weights sum to {total!r}, not 1")
        if abs(total - 1.0) > DESIGN_TOL:
            w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, p: int) -> Design:
        return cls(np.full(p, 1.0 / p))

    @classmethod
    def vertex(cls, p: int, index: int) -> Design:
        w = np.zeros(p)
        w[index] = 1.0
        return cls(w)

    @property
    def p(self) -> int:
        return int(self.w.size)

    @property
    def support(self) -> NDArray[np.int_]:
        return np.flatnonzero(self.w > 0)

    def to_rows(self) -> list[tuple[int, float]]:
        return [(i, float(v)) for i, v in enumerate(self.w)]


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Dual point y (or Y) with a certified bound eps on D(y*) − D(y)."""

    y: FloatArray
    eps: float
    source: CertificateSource

    def __post_init__(self) -> None:
        eps = float(self.eps)
        if not math.isfinite(eps) or eps < -CERTIFICATE_TOL:
            raise InvalidCertificate(f"Certificate bound must be nonnegative, got {self.eps!r}")
        y = _readonly(self.y)
        if not np.all(np.isfinite(y)):
            raise InvalidCertificate("Dual point must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eps", max(eps, 0.0))

    @property
    def Y(self) -> FloatArray:
        return self.y[:, None] if self.y.ndim == 1 else self.y


@dataclass(frozen=True)
class OptimalityReport:
    primal_value: float
    dual_value: float
    gap: float
    kkt_residual: float
    delta: float
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return max(self.gap, self.kkt_residual, self.delta) <= self.tol

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


@dataclass(frozen=True, eq=False)
class ScreeningMask:
    """Outcome of one screening test.

    ``scores`` holds the per-candidate test values (D0/D1/D2 or B); a candidate
    is eliminated when its score is positive. ``index_map`` lists the surviving
    candidates in the numbering of the instance the test was run on, or in the
    original numbering once the driver has composed several rounds.
    """

    eliminated: NDArray[np.bool_]
    rule: ScreenRule | None
    eps_used: float
    index_map: NDArray[np.int_]
    scores: FloatArray

    @property
    def n_eliminated(self) -> int:
        return int(np.count_nonzero(self.eliminated))

    @property
    def rho(self) -> float:
        return self.n_eliminated / self.eliminated.size

    def to_rows(self) -> list[tuple[int, float, bool]]:
        return [(i, float(s), bool(e)) for i, (s, e) in enumerate(zip(self.scores, self.eliminated))]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 100_000
    screen_rule: ScreenRule | None = None
    screen_period: int = 10
    seed: int = 0
    mwu_power: float = 0.5
    fista_restart: int = 200
    fw_away_steps: bool = True

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.screen_period < 1:
            raise ValueError(f"screen_period must be at least 1, got {self.screen_period}")
        if self.screen_rule is not None and self.screen_rule not in SCREEN_RULES:
            raise ValueError(f"Unsupported screening rule: {self.screen_rule}")
        if not 0 < self.mwu_power <= 1:
            raise ValueError(f"mwu_power must lie in (0, 1], got {self.mwu_power}")
        if self.fista_restart < 1:
            raise ValueError(f"fista_restart must be at least 1, got {self.fista_restart}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    value: float
    gap: float
    surviving: int
    elapsed: float


@dataclass
class SolverTrace:
    """Per-iteration history of one solver run.

    ``gap`` is the FromPrimal duality gap for primal-side algorithms and δ for
    design-side ones. ``full_gap`` is the same measure evaluated on the full,
    unscreened instance at exit.
    """

    algo: str
    p: int
    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    full_gap: float = math.inf

    @property
    def status(self) -> str:
        return "converged" if self.converged else "not_converged"

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap if self.records else math.inf

    @property
    def final_value(self) -> float:
        return self.records[-1].value if self.records else math.nan

    @property
    def rho(self) -> FloatArray:
        surviving = np.array([rec.surviving for rec in self.records], dtype=float)
        return 1.0 - surviving / self.p

    @property
    def pseudo_iterations(self) -> FloatArray:
        return np.cumsum(1.0 - self.rho)

    def to_rows(self) -> list[tuple[int, float, float, int, float]]:
        return [(rec.iteration, rec.value, rec.gap, rec.surviving, rec.elapsed) for rec in self.records]


@dataclass(frozen=True, eq=False)
class Breakpoint:
    alpha: float
    x: FloatArray
    lam: float
    active: tuple[int, ...]
    signs: tuple[int, ...]

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.x))

    @property
    def l1(self) -> float:
        return float(np.abs(self.x).sum())


@dataclass(frozen=True, eq=False)
class HomotopyPath:
    breakpoints: tuple[Breakpoint, ...]
    status: PathStatus

    @property
    def alphas(self) -> FloatArray:
        return np.array([bp.alpha for bp in self.breakpoints])

    @property
    def lambdas(self) -> FloatArray:
        return np.array([bp.lam for bp in self.breakpoints])

    def to_rows(self) -> list[tuple[int, float, float, int, str]]:
        rows = []
        for k, bp in enumerate(self.breakpoints, start=1):
            active = " ".join(str(j) for j in np.flatnonzero(bp.x))
            rows.append((k, bp.alpha, bp.lam, bp.nnz, active))
        return rows


@dataclass(frozen=True, eq=False)
class HomotopySolution:
    x: FloatArray
    design: Design
    path: HomotopyPath | None
    segment: int
    pathological: bool = False


@dataclass(frozen=True, eq=False)
class OracleSolution:
    x: FloatArray
    w: Design
    value: float
    certificate: DualCertificate
    method: OracleMethod


@dataclass(frozen=True)
class MappingReport:
    checks: dict[str, bool]
    residuals: dict[str, float]
    pathological: bool = False

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "pathological": self.pathological,
            "checks": {name: ("pass" if ok else "fail") for name, ok in self.checks.items()},
            "residuals": self.residuals,
        }


@dataclass(frozen=True)
class InstanceFiles:
    a_path: str
    target_path: str
    lam: float
    target_kind: TargetKind = "c"
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.target_kind not in ("c", "K"):
            raise ValueError(f"Unsupported target kind: {self.target_kind}")


@dataclass(frozen=True)
class ImseSpec:
    d: int = 2
    points: PointSet = "grid"
    n_per_axis: int = 9
    count: int = 256
    points_file: str | None = None
    theta: float = 10.0
    kernel: Kernel = "matern32"
    m: int = 10
    budget: int = 10

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"Dimension must be positive, got {self.d}")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.m < 1:
            raise ValueError(f"Truncation level must be positive, got {self.m}")
        if self.budget < 1:
            raise ValueError(f"Budget must be positive, got {self.budget}")
        if self.kernel not in ("matern12", "matern32", "matern52", "sqexp"):
            raise ValueError(f"Unsupported kernel: {self.kernel}")
        if self.points not in ("grid", "sobol", "halton", "file"):
            raise ValueError(f"Unsupported point set: {self.points}")
        if self.points == "file" and not self.points_file:
            raise ValueError("points='file' needs points_file")


@dataclass(frozen=True, eq=False)
class ImseInstance:
    instance: ProblemInstance
    points: FloatArray
    eigenvalues: FloatArray
    eigenfunctions: FloatArray
    sigma2: FloatArray
    budget: int
