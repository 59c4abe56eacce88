"""Closed-form triggering bounds, sample-size thresholds and constant conversions.

Lower bounds are returned unclamped; ``BoundValue.vacuous`` flags the ones
that carry no information. Sample sizes use strict inequalities, so a
threshold that is hit exactly rounds up to the next integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from sgdstop.problems import Scenario


@dataclass(frozen=True)
class BoundValue:
    value: float

    @property
    def vacuous(self) -> bool:
        return self.value <= 0

    def to_dict(self):
        return {"value": self.value, "vacuous": self.vacuous}


@dataclass(frozen=True)
class FalseNegativeDesign:
    rho: float
    gamma: float
    scenario: Scenario = Scenario.A

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")

    @property
    def fn_level(self) -> float:
        return 1.0 / self.gamma


def sc1_trigger_lower_bound(c1: float, c2: float, N: int, grad_norm: float, epsilon: float) -> BoundValue:
    """Markov bound on ``P[||mean of N stochastic gradients|| <= epsilon]``."""
    g2 = grad_norm * grad_norm
    return BoundValue(1.0 - (c1 + (c2 + N) * g2) / (N * epsilon * epsilon))


def pareto_trigger_lower_bound(pi2: float, pi3: float, N: int, grad_norm: float, epsilon: float, pi1: float | None = None) -> BoundValue:
    """Tail-condition bound ``1 - N (pi3 ||grad F|| / epsilon)^pi2``.

    Applies only when ``grad_norm <= pi1`` (checked if ``pi1`` is given) and
    ``epsilon >= pi3 * grad_norm``.
    """
    if pi1 is not None and grad_norm > pi1:
        raise ValueError(f"grad_norm {grad_norm} exceeds pi1 = {pi1}; the tail bound does not apply")
    if epsilon < pi3 * grad_norm:
        raise ValueError(f"epsilon {epsilon} is below pi3 * grad_norm = {pi3 * grad_norm}; the tail bound does not apply")
    return BoundValue(1.0 - N * (pi3 * grad_norm / epsilon) ** pi2)


def sc2_trigger_lower_bound(N: int, Delta: float) -> BoundValue:
    """McDiarmid bound ``1 - exp(-2 N Delta^2)`` for a vote gap ``Delta < 0``."""
    if not Delta < 0:
        raise ValueError(f"Delta must be negative, got {Delta}")
    return BoundValue(-math.expm1(-2.0 * N * Delta * Delta))


def _smallest_integer_above(threshold: float) -> int:
    return max(1, math.floor(threshold) + 1)


def sc1_min_sample_threshold(c1: float, c2: float, epsilon: float, design: FalseNegativeDesign) -> float:
    rho, gamma = design.rho, design.gamma
    return (gamma * c1 + c2 * (epsilon * rho) ** 2) / ((1.0 - rho * rho) * epsilon * epsilon)


def sc1_min_sample_size(c1: float, c2: float, epsilon: float, design: FalseNegativeDesign) -> int:
    """Smallest N keeping SC1's false-negative probability at or below ``1/gamma``.

    The guarantee holds whenever ``||grad F|| <= rho * epsilon / sqrt(gamma)``.
    """
    # exact rational arithmetic on the given floats, so thresholds that are
    # whole numbers on paper are not rounded to just below the integer
    c1, c2, eps, rho, gamma = (Fraction(v) for v in (c1, c2, epsilon, design.rho, design.gamma))
    threshold = (gamma * c1 + c2 * (eps * rho) ** 2) / ((1 - rho * rho) * eps * eps)
    return max(1, math.floor(threshold) + 1)


def sc2_rho_cap(scenario: Scenario, c2: float, delta_bar: float, pi2: float | None = None) -> float:
    scenario = Scenario(scenario)
    if not 0 < delta_bar < 1:
        raise ValueError("delta_bar must lie in (0, 1)")
    if scenario is Scenario.B:
        return math.sqrt((1.0 - delta_bar) / (c2 + 1.0))
    if scenario is Scenario.C:
        if pi2 is None:
            raise ValueError("scenario C needs pi2")
        return (1.0 - delta_bar) ** (1.0 / pi2)
    raise ValueError("the majority-vote guarantees cover scenarios B and C only")


def sc2_gap(scenario: Scenario, delta_bar: float, design: FalseNegativeDesign, pi2: float | None = None) -> float:
    """Worst-case margin ``1 - delta_bar - (per-sample miss probability)``."""
    scenario = Scenario(scenario)
    rho, gamma = design.rho, design.gamma
    if scenario is Scenario.B:
        return 1.0 - delta_bar - rho * rho / gamma
    if scenario is Scenario.C:
        if pi2 is None:
            raise ValueError("scenario C needs pi2")
        return 1.0 - delta_bar - (rho / gamma) ** pi2
    raise ValueError("the majority-vote guarantees cover scenarios B and C only")


def sc2_min_sample_threshold(scenario: Scenario, delta_bar: float, design: FalseNegativeDesign, pi2: float | None = None) -> float:
    gap = sc2_gap(scenario, delta_bar, design, pi2)
    if not gap > 0:
        raise ValueError(f"rho = {design.rho} leaves no vote margin (gap {gap}); lower rho")
    return math.log(design.gamma) / (2.0 * gap * gap)


def sc2_min_sample_size(scenario: Scenario, delta_bar: float, design: FalseNegativeDesign, pi2: float | None = None) -> int:
    """Smallest N keeping SC2's false-negative probability at or below ``1/gamma``.

    The gradient gate is ``rho * epsilon / sqrt(gamma)`` in scenario B and
    ``rho * epsilon / (pi3 * gamma)`` in scenario C. Whether ``rho`` respects
    :func:`sc2_rho_cap` is checked by callers that claim the guarantee
    (see :func:`check_sc2_design`); here only a positive margin is required.
    """
    return _smallest_integer_above(sc2_min_sample_threshold(scenario, delta_bar, design, pi2))


def check_sc2_design(scenario: Scenario, c2: float, delta_bar: float, design: FalseNegativeDesign, pi2: float | None = None) -> None:
    cap = sc2_rho_cap(scenario, c2, delta_bar, pi2)
    if not design.rho < cap:
        raise ValueError(f"rho = {design.rho} is not below the scenario-{Scenario(scenario).value} cap {cap}")


def gradient_gate(kind: str, design: FalseNegativeDesign, epsilon: float, pi3: float | None = None) -> float:
    """Largest oracle gradient norm at which the false-negative guarantee applies."""
    if kind == "SC1" or design.scenario is not Scenario.C:
        return design.rho * epsilon / math.sqrt(design.gamma)
    if pi3 is None:
        raise ValueError("scenario C needs pi3")
    return design.rho * epsilon / (pi3 * design.gamma)


def derive_bcn_from_sg_lipschitz(sg_lipschitz_C: float, lower_L: float) -> tuple[float, float]:
    """Noise constants implied by Lipschitz stochastic gradients and ``f >= L``."""
    if not sg_lipschitz_C > 0:
        raise ValueError("sg_lipschitz_C must be > 0")
    c2 = 4.0 * sg_lipschitz_C
    return (0.0 if lower_L >= 0 else -4.0 * sg_lipschitz_C * lower_L), c2


def pl_convert(c1: float, c2: float, f_star: float, mu: float) -> tuple[float, float]:
    """Objective-based noise constants to gradient-based ones under a PL inequality."""
    if not mu > 0:
        raise ValueError("mu must be > 0")
    return c1 + c2 * f_star, c2 / mu


FORMULAS = {
    "sc1_trigger_lower_bound": sc1_trigger_lower_bound,
    "pareto_trigger_lower_bound": pareto_trigger_lower_bound,
    "sc2_trigger_lower_bound": sc2_trigger_lower_bound,
    "sc1_min_sample_size": sc1_min_sample_size,
    "sc2_rho_cap": sc2_rho_cap,
    "sc2_min_sample_size": sc2_min_sample_size,
    "derive_bcn_from_sg_lipschitz": derive_bcn_from_sg_lipschitz,
    "pl_convert": pl_convert,
}
