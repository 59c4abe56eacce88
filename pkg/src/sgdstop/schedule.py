"""Matrix learning-rate schedules and their P1-P4 certificates.

The parametric families all have the form ``M_k = r_k * D`` with a fixed
positive diagonal ``D`` (the identity for the scalar families), which keeps
eigendata and the minimal-index computation closed-form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special

SYMMETRY_RTOL = 1e-12
EXPLICIT_SYMMETRY_RTOL = 1e-10


class Family(str, enum.Enum):
    SCALAR_RATIONAL = "scalar_rational"  # r_k = a * b / (k + b)
    SCALAR_POWER = "scalar_power"  # r_k = a / (k + 1)^q
    DIAGONAL_RATIONAL = "diagonal_rational"  # M_k = diag(scales) * a * b / (k + b)
    EXPLICIT_LIST = "explicit_list"


class Verdict(str, enum.Enum):
    PROVEN_FINITE = "ProvenFinite"
    PROVEN_INFINITE = "ProvenInfinite"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class StepMatrix:
    matrix: np.ndarray
    lambda_min: float
    lambda_max: float
    kappa: float
    diagonal: np.ndarray | None = field(default=None, repr=False)

    def apply(self, g: np.ndarray) -> np.ndarray:
        """``M @ g``; diagonal matrices skip the zero off-diagonal terms."""
        if self.diagonal is not None:
            return self.diagonal * g
        return self.matrix @ g

    @classmethod
    def from_diagonal(cls, diagonal: np.ndarray) -> StepMatrix:
        diagonal = np.asarray(diagonal, dtype=float)
        lo, hi = float(diagonal.min()), float(diagonal.max())
        if not lo > 0:
            raise ValueError(f"step matrix is not positive definite (lambda_min = {lo})")
        return cls(np.diag(diagonal), lo, hi, hi / lo, diagonal)

    @classmethod
    def from_matrix(cls, matrix, rtol: float = EXPLICIT_SYMMETRY_RTOL) -> StepMatrix:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("step matrix must be square")
        scale = max(float(np.linalg.norm(matrix)), np.finfo(float).tiny)
        if np.linalg.norm(matrix - matrix.T) > rtol * scale:
            raise ValueError("step matrix is not symmetric")
        sym = 0.5 * (matrix + matrix.T)
        eig = np.linalg.eigvalsh(sym)
        lo, hi = float(eig[0]), float(eig[-1])
        if not lo > 0:
            raise ValueError(f"step matrix is not positive definite (lambda_min = {lo})")
        return cls(sym, lo, hi, hi / lo)


@dataclass(frozen=True)
class ScheduleSpec:
    family: Family
    dimension: int
    a: float = 1.0
    b: float = 1.0
    q: float = 1.0
    scales: tuple[float, ...] | None = None
    matrices: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.family is Family.EXPLICIT_LIST:
            if not self.matrices:
                raise ValueError("explicit_list schedule needs a nonempty list of matrices")
            mats = tuple(np.asarray(m, dtype=float) for m in self.matrices)
            for m in mats:
                if m.shape != (self.dimension, self.dimension):
                    raise ValueError(f"explicit matrices must be {self.dimension}x{self.dimension}")
            object.__setattr__(self, "matrices", mats)
            return
        if not self.a > 0:
            raise ValueError("a must be > 0")
        if self.family in (Family.SCALAR_RATIONAL, Family.DIAGONAL_RATIONAL) and not self.b > 0:
            raise ValueError("b must be > 0")
        if self.family is Family.DIAGONAL_RATIONAL:
            if self.scales is None or len(self.scales) != self.dimension:
                raise ValueError("diagonal_rational needs one scale per dimension")
            scales = tuple(float(s) for s in self.scales)
            if min(scales) <= 0:
                raise ValueError("diagonal scales must be > 0")
            object.__setattr__(self, "scales", scales)

    @classmethod
    def scalar_rational(cls, a: float, b: float, dimension: int = 1) -> ScheduleSpec:
        return cls(Family.SCALAR_RATIONAL, dimension, a=a, b=b)

    @classmethod
    def scalar_power(cls, a: float, q: float, dimension: int = 1) -> ScheduleSpec:
        return cls(Family.SCALAR_POWER, dimension, a=a, q=q)

    @classmethod
    def diagonal_rational(cls, scales, a: float, b: float) -> ScheduleSpec:
        scales = tuple(scales)
        return cls(Family.DIAGONAL_RATIONAL, len(scales), a=a, b=b, scales=scales)

    @classmethod
    def explicit_list(cls, matrices) -> ScheduleSpec:
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in matrices)
        if not mats:
            raise ValueError("explicit_list schedule needs a nonempty list of matrices")
        return cls(Family.EXPLICIT_LIST, mats[0].shape[0], matrices=mats)

    @property
    def is_scalar(self) -> bool:
        return self.family in (Family.SCALAR_RATIONAL, Family.SCALAR_POWER)

    @property
    def horizon(self) -> int | None:
        """Number of defined steps, or None for the unbounded families."""
        return len(self.matrices) if self.family is Family.EXPLICIT_LIST else None

    @property
    def base_diagonal(self) -> np.ndarray:
        if self.family is Family.DIAGONAL_RATIONAL:
            return np.asarray(self.scales)
        return np.ones(self.dimension)

    def rates(self, k) -> np.ndarray:
        """Scalar multiplier ``r_k`` of the parametric families (vectorized in k)."""
        k = np.asarray(k, dtype=float)
        if self.family is Family.SCALAR_POWER:
            return self.a / (k + 1.0) ** self.q
        if self.family is Family.EXPLICIT_LIST:
            raise ValueError("explicit_list schedules have no scalar multiplier")
        return self.a * self.b / (k + self.b)

    def extreme_eigenvalues(self, ks) -> tuple[np.ndarray, np.ndarray]:
        """``(lambda_min(M_k), lambda_max(M_k))`` for each k in ``ks``."""
        ks = np.asarray(ks)
        if self.family is Family.EXPLICIT_LIST:
            mats = [step_matrix(self, int(k)) for k in ks]
            return (np.array([m.lambda_min for m in mats]), np.array([m.lambda_max for m in mats]))
        r = self.rates(ks)
        d = self.base_diagonal
        return r * d.min(), r * d.max()

    def to_dict(self) -> dict[str, Any]:
        params: dict[str, Any]
        if self.family is Family.SCALAR_RATIONAL:
            params = {"a": self.a, "b": self.b}
        elif self.family is Family.SCALAR_POWER:
            params = {"a": self.a, "q": self.q}
        elif self.family is Family.DIAGONAL_RATIONAL:
            params = {"a": self.a, "b": self.b, "scales": list(self.scales)}
        else:
            params = {"matrices": [m.tolist() for m in self.matrices]}
        return {"family": self.family.value, "params": params}

    @classmethod
    def from_dict(cls, d: dict[str, Any], dimension: int) -> ScheduleSpec:
        family = Family(d["family"])
        params = dict(d.get("params", {}))
        if family is Family.EXPLICIT_LIST:
            spec = cls.explicit_list(params["matrices"])
            if spec.dimension != dimension:
                raise ValueError(f"explicit matrices are {spec.dimension}x{spec.dimension}, problem has p={dimension}")
            return spec
        if "scales" in params:
            params["scales"] = tuple(params["scales"])
        return cls(family, dimension, **params)

    def __eq__(self, other):
        if not isinstance(other, ScheduleSpec):
            return NotImplemented
        return self.dimension == other.dimension and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.family, self.dimension, self.a, self.b, self.q, self.scales))


def step_matrix(spec: ScheduleSpec, k: int) -> StepMatrix:
    """Learning-rate matrix ``M_k``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if spec.family is Family.EXPLICIT_LIST:
        if k >= len(spec.matrices):
            raise ValueError(f"k={k} is beyond the explicit schedule's horizon {len(spec.matrices)}")
        return StepMatrix.from_matrix(spec.matrices[k])
    r = float(spec.rates(k))
    if not r > 0:
        raise ValueError(f"non-positive learning rate {r} at k={k}")
    if spec.is_scalar:
        matrix = r * np.eye(spec.dimension)
        return StepMatrix(matrix, r, r, 1.0, np.full(spec.dimension, r))
    return StepMatrix.from_diagonal(r * spec.base_diagonal)


def lemma_inequality_holds(lam: np.ndarray, lam_min: np.ndarray, lam_max: np.ndarray, C: float, C2: float) -> np.ndarray:
    """``lam_min / 2 <= lam - C lam^2 / 2 - C C2 lam_max^2 / 2`` elementwise."""
    return 0.5 * lam_min <= lam - 0.5 * C * lam**2 - 0.5 * C * C2 * lam_max**2


def relaxed_condnum_threshold(C: float, C2: float) -> float:
    """Level ``1 / (2 C (C2 + 1))`` that ``lambda_max * kappa`` must eventually stay below."""
    if C == 0:
        return math.inf
    return 1.0 / (2.0 * C * (C2 + 1.0))


@dataclass(frozen=True)
class ScheduleCertificate:
    p1_ok: bool
    p2_verdict: Verdict
    p2_bound: float | None
    p3_verdict: Verdict
    p4_limit_estimate: float
    k_star: int | None
    horizon_checked: int
    k_star_analytic: int | None = None
    relaxed_condnum_threshold: float = math.inf

    @property
    def certified(self) -> bool:
        """P1-P4 all hold (P4 judged by the limit estimate)."""
        return (
            self.p1_ok
            and self.p2_verdict is Verdict.PROVEN_FINITE
            and self.p3_verdict is Verdict.PROVEN_INFINITE
            and self.p4_limit_estimate == 0.0
        )

    def to_dict(self) -> dict[str, Any]:
        def num(x):
            if x is None or math.isfinite(x):
                return x
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")

        return {
            "p1_ok": self.p1_ok,
            "p2_verdict": self.p2_verdict.value,
            "p2_bound": num(self.p2_bound),
            "p3_verdict": self.p3_verdict.value,
            "p4_limit_estimate": num(self.p4_limit_estimate),
            "k_star": self.k_star,
            "k_star_analytic": self.k_star_analytic,
            "relaxed_condnum_threshold": num(self.relaxed_condnum_threshold),
            "horizon_checked": self.horizon_checked,
            "certified": self.certified,
        }


def _analytic_series(spec: ScheduleSpec) -> tuple[Verdict, float | None, Verdict, float]:
    """P2 verdict and series value, P3 verdict, and the P4 limit."""
    smax = float(spec.base_diagonal.max())
    if spec.family is Family.SCALAR_POWER:
        q = spec.q
        if q > 0.5:
            p2, s = Verdict.PROVEN_FINITE, float(spec.a**2 * special.zeta(2.0 * q, 1.0))
        else:
            p2, s = Verdict.PROVEN_INFINITE, None
        p3 = Verdict.PROVEN_INFINITE if q <= 1 else Verdict.PROVEN_FINITE
        p4 = 0.0 if q > 0 else (spec.a if q == 0 else math.inf)
        return p2, s, p3, p4
    # a*b/(k+b) ~ ab/k: square-summable, not summable, kappa constant
    s = float((smax * spec.a * spec.b) ** 2 * special.polygamma(1, spec.b))
    return Verdict.PROVEN_FINITE, s, Verdict.PROVEN_INFINITE, 0.0


def _analytic_k_star(spec: ScheduleSpec, C: float, C2: float) -> int | None:
    """Smallest K with the inequality holding for every k >= K.

    With ``M_k = r_k D`` and ``lambda = s r_k`` (s an extreme entry of D), the
    inequality is ``r_k <= (s - s_min/2) / (C s^2/2 + C C2 s_max^2/2)``; the
    families here have non-increasing ``r_k``, so the first k below the
    threshold works for all later k.
    """
    if spec.family is Family.EXPLICIT_LIST:
        return None
    if C == 0:
        return 0
    d = spec.base_diagonal
    s_min, s_max = float(d.min()), float(d.max())
    threshold = min(
        (s - 0.5 * s_min) / (0.5 * C * s * s + 0.5 * C * C2 * s_max * s_max) for s in (s_min, s_max)
    )
    if spec.family is Family.SCALAR_POWER:
        if spec.q <= 0:
            return 0 if spec.a <= threshold else None
        k = math.ceil((spec.a / threshold) ** (1.0 / spec.q) - 1.0)
    else:
        k = math.ceil(spec.a * spec.b / threshold - spec.b)
    k = max(k, 0)
    # settle floating error against the exact inequality
    while k > 0 and _holds_at(spec, k - 1, C, C2):
        k -= 1
    while not _holds_at(spec, k, C, C2):
        k += 1
    return k


def _holds_at(spec: ScheduleSpec, k: int, C: float, C2: float) -> bool:
    lo, hi = spec.extreme_eigenvalues([k])
    return bool(
        lemma_inequality_holds(lo, lo, hi, C, C2)[0] and lemma_inequality_holds(hi, lo, hi, C, C2)[0]
    )


def certify(spec: ScheduleSpec, lipschitz_C: float, noise_C2: float, horizon: int) -> ScheduleCertificate:
    """Check P1-P4 and locate the minimal index K of the step-size lemma."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if spec.family is Family.EXPLICIT_LIST and not spec.matrices:
        raise ValueError("explicit_list schedule is empty")
    if spec.family is Family.EXPLICIT_LIST:
        horizon = min(horizon, len(spec.matrices))
    ks = np.arange(horizon + (0 if spec.family is Family.EXPLICIT_LIST else 1))
    try:
        lo, hi = spec.extreme_eigenvalues(ks)
        p1_ok = bool(np.all(lo > 0))
    except ValueError:
        return ScheduleCertificate(
            False, Verdict.UNKNOWN, None, Verdict.UNKNOWN, math.nan, None, horizon,
            relaxed_condnum_threshold=relaxed_condnum_threshold(lipschitz_C, noise_C2),
        )

    ok = lemma_inequality_holds(lo, lo, hi, lipschitz_C, noise_C2) & lemma_inequality_holds(
        hi, lo, hi, lipschitz_C, noise_C2
    )
    bad = np.flatnonzero(~ok)
    k_star = 0 if bad.size == 0 else (int(bad[-1]) + 1 if bad[-1] + 1 < ks.size else None)

    if spec.family is Family.EXPLICIT_LIST:
        p2, s, p3 = Verdict.UNKNOWN, None, Verdict.UNKNOWN
        p4 = float(hi[-1] * hi[-1] / lo[-1])
        k_analytic = None
    else:
        p2, s, p3, p4 = _analytic_series(spec)
        k_analytic = _analytic_k_star(spec, lipschitz_C, noise_C2)
        if k_star is not None and k_analytic is not None and k_star != k_analytic:
            raise AssertionError(f"horizon scan gives K={k_star} but the closed form gives K={k_analytic}")
    return ScheduleCertificate(
        p1_ok=p1_ok,
        p2_verdict=p2,
        p2_bound=s,
        p3_verdict=p3,
        p4_limit_estimate=p4,
        k_star=k_star,
        horizon_checked=int(ks[-1]),
        k_star_analytic=k_analytic,
        relaxed_condnum_threshold=relaxed_condnum_threshold(lipschitz_C, noise_C2),
    )
