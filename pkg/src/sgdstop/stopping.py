"""Stopping criteria evaluated on a strictly increasing checkpoint schedule.

SC0 thresholds the oracle gradient norm, SC1 thresholds the norm of a fresh
sample-mean gradient, and SC2 is a majority vote over fresh per-sample
gradient norms. Comparisons are inclusive on both sides (``<= epsilon``,
``>= delta``).
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from sgdstop import rng as lanes
from sgdstop.problems import Problem
from sgdstop.schedule import ScheduleSpec
from sgdstop.sgd import Iterates, RunConfig


class Kind(str, enum.Enum):
    SC0 = "SC0"
    SC1 = "SC1"
    SC2 = "SC2"


class Classification(str, enum.Enum):
    TRUE_POSITIVE = "TruePositive"
    FALSE_POSITIVE = "FalsePositive"
    TRUE_NEGATIVE = "TrueNegative"
    FALSE_NEGATIVE = "FalseNegative"


class NonFiniteSampleError(ValueError):
    pass


def classify(triggered: bool, oracle_grad_norm: float, epsilon: float) -> Classification:
    """Score an estimated verdict against SC0 at the same epsilon."""
    truth = sc0_evaluate(oracle_grad_norm, epsilon)
    if triggered:
        return Classification.TRUE_POSITIVE if truth else Classification.FALSE_POSITIVE
    return Classification.FALSE_NEGATIVE if truth else Classification.TRUE_NEGATIVE


@dataclass(frozen=True)
class SampleSizeRule:
    """``N_j = base + slope * (j - 1)`` for evaluation index ``j >= 1``."""

    base: int
    slope: int = 0

    def __post_init__(self):
        if self.base < 1 or self.slope < 0:
            raise ValueError("sample size rule needs base >= 1 and slope >= 0")

    def __call__(self, j: int) -> int:
        return self.base + self.slope * (j - 1)


@dataclass(frozen=True)
class VoteThresholdRule:
    """``delta_j = base + slope * (j - 1)``; must stay inside ``(0, delta_bar)``."""

    base: float
    slope: float = 0.0

    def __call__(self, j: int) -> float:
        return self.base + self.slope * (j - 1)


@dataclass(frozen=True)
class EvalSchedule:
    """Evaluation iterations ``T_j``: either ``j * stride`` or an explicit list."""

    stride: int | None = None
    points: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.stride is None) == (self.points is None):
            raise ValueError("give exactly one of stride or points")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.points is not None:
            pts = tuple(int(p) for p in self.points)
            if not pts:
                raise ValueError("evaluation schedule is empty")
            if pts[0] < 1 or any(b <= a for a, b in zip(pts, pts[1:])):
                raise ValueError("evaluation iterations must be positive and strictly increasing")
            object.__setattr__(self, "points", pts)

    def iteration(self, j: int) -> int | None:
        """``T_j`` for ``j >= 1``; None past the end of an explicit list."""
        if self.stride is not None:
            return j * self.stride
        return self.points[j - 1] if j <= len(self.points) else None

    def iterations(self, budget: int, max_evaluations: int) -> list[int]:
        out = []
        for j in range(1, max_evaluations + 1):
            t = self.iteration(j)
            if t is None or t > budget:
                break
            out.append(t)
        return out


@dataclass(frozen=True)
class CriterionConfig:
    epsilon: float
    sample_size_rule: SampleSizeRule
    eval_schedule: EvalSchedule
    max_evaluations: int
    vote_threshold_rule: VoteThresholdRule | None = None
    delta_bar: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        if self.delta_bar is not None and not 0 < self.delta_bar < 1:
            raise ValueError("delta_bar must lie in (0, 1)")
        if self.vote_threshold_rule is not None:
            self.vote_threshold(1)

    def vote_threshold(self, j: int) -> float:
        if self.vote_threshold_rule is None:
            raise ValueError("SC2 needs a vote threshold rule")
        d = self.vote_threshold_rule(j)
        cap = 1.0 if self.delta_bar is None else self.delta_bar
        if not 0 < d < cap:
            raise ValueError(f"delta_{j} = {d} is outside (0, {cap})")
        return d


@dataclass(frozen=True)
class EvalRecord:
    j: int
    iteration: int
    statistic: float
    triggered: bool
    oracle_grad_norm: float
    classification: Classification
    N: int = 0
    delta: float | None = None
    passing: int | None = None  # SC2 vote count


@dataclass
class StopReport:
    kind: Kind
    epsilon: float
    records: list[EvalRecord] = field(default_factory=list)
    stop_point: np.ndarray | None = None

    @property
    def triggered(self) -> bool:
        return bool(self.records) and self.records[-1].triggered

    @property
    def outcome(self) -> str:
        return "Triggered" if self.triggered else "BudgetExhausted"

    @property
    def J(self) -> int | None:
        return self.records[-1].j if self.triggered else None

    @property
    def stop_iteration(self) -> int | None:
        return self.records[-1].iteration if self.triggered else None

    @property
    def stop_grad_norm(self) -> float | None:
        return self.records[-1].oracle_grad_norm if self.triggered else None

    def counts(self) -> dict[Classification, int]:
        out = {c: 0 for c in Classification}
        for r in self.records:
            out[r.classification] += 1
        return out

    def summary(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "epsilon": self.epsilon,
            "outcome": self.outcome,
            "J": self.J,
            "stop_iteration": self.stop_iteration,
            "stop_grad_norm": self.stop_grad_norm,
            "stop_point": None if self.stop_point is None else [float(v) for v in self.stop_point],
            "evaluations": len(self.records),
            "classification_counts": {c.value: n for c, n in self.counts().items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "iteration", "statistic", "triggered", "oracle_grad_norm", "classification"])
        for r in self.records:
            w.writerow([r.j, r.iteration, repr(float(r.statistic)), int(r.triggered), repr(float(r.oracle_grad_norm)), r.classification.value])
        return buf.getvalue()


def sc0_evaluate(oracle_grad_norm: float, epsilon: float) -> bool:
    return oracle_grad_norm <= epsilon


def _gradients(problem: Problem, theta, samples) -> np.ndarray:
    grads = problem.stochastic_gradients(theta, samples)
    if not np.all(np.isfinite(grads)):
        raise NonFiniteSampleError("non-finite stochastic gradient in criterion sample")
    return grads


def sc1_statistic(problem: Problem, theta, samples) -> float:
    """``||sum_i grad f(theta, z_i)|| / N``."""
    grads = _gradients(problem, theta, samples)
    return float(np.linalg.norm(grads.sum(axis=0))) / grads.shape[0]


def sc2_votes(problem: Problem, theta, samples, epsilon: float) -> int:
    """Number of samples whose stochastic gradient norm is ``<= epsilon``."""
    grads = _gradients(problem, theta, samples)
    return int(np.count_nonzero(np.linalg.norm(grads, axis=1) <= epsilon))


def sc1_evaluate(problem: Problem, theta, N: int, epsilon: float, rng: np.random.Generator, *, j: int = 0, iteration: int = 0) -> EvalRecord:
    if N < 1:
        raise ValueError("N must be >= 1")
    stat = sc1_statistic(problem, theta, problem.sample_batch(rng, N))
    triggered = stat <= epsilon
    oracle = problem.oracle_gradient_norm(theta)
    return EvalRecord(j, iteration, stat, triggered, oracle, classify(triggered, oracle, epsilon), N=N)


def sc2_evaluate(problem: Problem, theta, N: int, epsilon: float, delta: float, rng: np.random.Generator, *, j: int = 0, iteration: int = 0) -> EvalRecord:
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    votes = sc2_votes(problem, theta, problem.sample_batch(rng, N), epsilon)
    stat = votes / N
    triggered = stat >= delta
    oracle = problem.oracle_gradient_norm(theta)
    return EvalRecord(
        j, iteration, stat, triggered, oracle, classify(triggered, oracle, epsilon), N=N, delta=delta, passing=votes
    )


def sc0_record(problem: Problem, theta, epsilon: float, *, j: int = 0, iteration: int = 0) -> EvalRecord:
    oracle = problem.oracle_gradient_norm(theta)
    triggered = sc0_evaluate(oracle, epsilon)
    return EvalRecord(j, iteration, oracle, triggered, oracle, classify(triggered, oracle, epsilon))


def evaluate(kind: Kind, problem: Problem, theta, crit: CriterionConfig, j: int, rng: np.random.Generator, iteration: int = 0) -> EvalRecord:
    kind = Kind(kind)
    if kind is Kind.SC0:
        return sc0_record(problem, theta, crit.epsilon, j=j, iteration=iteration)
    N = crit.sample_size_rule(j)
    if kind is Kind.SC1:
        return sc1_evaluate(problem, theta, N, crit.epsilon, rng, j=j, iteration=iteration)
    return sc2_evaluate(problem, theta, N, crit.epsilon, crit.vote_threshold(j), rng, j=j, iteration=iteration)


def run_with_criterion(problem: Problem, spec: ScheduleSpec, cfg: RunConfig, crit: CriterionConfig, kind: Kind) -> StopReport:
    """Advance SGD and evaluate the criterion at each ``T_j`` until it triggers.

    Criterion samples for evaluation ``j`` come from the lane
    ``(cfg.seed, CRITERION, j)``, disjoint from the trajectory lane.
    """
    kind = Kind(kind)
    if kind is Kind.SC2:
        crit.vote_threshold(1)
    report = StopReport(kind, crit.epsilon)
    seq = Iterates(problem, spec, cfg)
    for j, t in enumerate(crit.eval_schedule.iterations(cfg.budget, crit.max_evaluations), start=1):
        theta = seq.advance_to(t)
        rec = evaluate(kind, problem, theta, crit, j, lanes.stream(cfg.seed, lanes.CRITERION, j), iteration=t)
        report.records.append(rec)
        if rec.triggered:
            report.stop_point = theta.copy()
            break
    return report

