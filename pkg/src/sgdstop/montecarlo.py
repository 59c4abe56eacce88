"""Replicated criterion evaluations: trigger-rate sweeps, false-negative checks, bound audits.

Replication ``r`` of grid cell ``g`` at checkpoint ``c`` draws its samples from
the lane ``(base_seed, MONTECARLO, c, g, r)``, so every result is a pure function
of its key and does not depend on how the work is split across processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import stats

from sgdstop import bounds
from sgdstop import rng as lanes
from sgdstop.problems import Problem, Scenario, as_param_vector, make_problem
from sgdstop.schedule import ScheduleSpec
from sgdstop.sgd import RunConfig, run
from sgdstop.stopping import Kind, sc0_evaluate, sc1_statistic, sc2_votes

DEFAULT_REPS = 100
PILOT_DRAWS = 10**6
_PILOT_BLOCK = 100_000


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval, widened if needed so it contains ``successes / trials``."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    p = successes / trials
    return float(max(0.0, min(ci.low, p))), float(min(1.0, max(ci.high, p)))


def three_sigma_floor(level: float, reps: int) -> float:
    """``level - 3 sqrt(level (1 - level) / reps)``, the one-sided audit tolerance."""
    return level - 3.0 * math.sqrt(max(level * (1.0 - level), 0.0) / reps)


def three_sigma_ceiling(level: float, reps: int) -> float:
    return level + 3.0 * math.sqrt(level * (1.0 - level) / reps)


def count_triggers(
    problem: Problem, theta: np.ndarray, kind: Kind, N: int, epsilon: float, delta: float | None, reps: int, seed: int, key: tuple[int, ...]
) -> int:
    """Number of triggered evaluations among ``reps`` independent replications."""
    kind = Kind(kind)
    if kind is Kind.SC0:
        return reps if sc0_evaluate(problem.oracle_gradient_norm(theta), epsilon) else 0
    hits = 0
    for r in range(reps):
        xs = problem.sample_batch(lanes.stream(seed, lanes.MONTECARLO, *key, r), N)
        if kind is Kind.SC1:
            hits += sc1_statistic(problem, theta, xs) <= epsilon
        else:
            hits += sc2_votes(problem, theta, xs, epsilon) / N >= delta
    return int(hits)


def _count_task(args) -> int:
    return count_triggers(*args)


def _map(tasks: list[tuple], parallelism: int) -> list[int]:
    if parallelism <= 1 or len(tasks) <= 1:
        return [_count_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_count_task, tasks, chunksize=max(1, len(tasks) // (4 * parallelism))))


@dataclass(frozen=True)
class ExperimentPlan:
    problem_name: str
    problem_params: dict[str, Any]
    schedule: ScheduleSpec
    run: RunConfig
    kind: Kind
    epsilon: float
    sample_sizes: tuple[int, ...] = ()
    deltas: tuple[float, ...] = ()
    reps: int = DEFAULT_REPS
    base_seed: int | None = None  # defaults to run.seed

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if any(n < 1 for n in self.sample_sizes):
            raise ValueError("sample sizes must be >= 1")
        if any(not 0 < d < 1 for d in self.deltas):
            raise ValueError("vote thresholds must lie in (0, 1)")
        if self.kind is not Kind.SC0 and not self.sample_sizes:
            raise ValueError("the grid needs at least one sample size")
        if self.kind is Kind.SC2 and not self.deltas:
            raise ValueError("SC2 grids need at least one vote threshold")

    @property
    def seed(self) -> int:
        return self.run.seed if self.base_seed is None else self.base_seed

    def build_problem(self) -> Problem:
        return make_problem(self.problem_name, **self.problem_params)

    def cells(self) -> list[tuple[int, float | None]]:
        if self.kind is Kind.SC0:
            return [(0, None)]
        if self.kind is Kind.SC1:
            return [(n, None) for n in self.sample_sizes]
        return [(n, d) for n in self.sample_sizes for d in self.deltas]


@dataclass(frozen=True)
class CellResult:
    checkpoint_iter: int
    oracle_grad_norm: float
    objective: float
    criterion: Kind
    N: int
    delta: float | None
    epsilon: float
    reps: int
    triggers: int

    def __post_init__(self):
        if not 0 <= self.triggers <= self.reps:
            raise ValueError("trigger count outside [0, reps]")

    @property
    def trigger_rate(self) -> float:
        return self.triggers / self.reps

    @property
    def wilson_ci(self) -> tuple[float, float]:
        return wilson_interval(self.triggers, self.reps)

    @property
    def should_trigger(self) -> bool:
        return sc0_evaluate(self.oracle_grad_norm, self.epsilon)

    @property
    def fn_rate(self) -> float:
        return 1.0 - self.trigger_rate if self.should_trigger else 0.0

    @property
    def fp_rate(self) -> float:
        return 0.0 if self.should_trigger else self.trigger_rate


CELL_COLUMNS = [
    "checkpoint_iter", "oracle_grad_norm", "objective", "criterion", "N", "delta", "epsilon",
    "reps", "trigger_rate", "ci_lo", "ci_hi", "fn_rate", "fp_rate",
]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def cells_to_csv(results: list[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_COLUMNS)
    for c in results:
        lo, hi = c.wilson_ci
        w.writerow([
            c.checkpoint_iter, _num(c.oracle_grad_norm), _num(c.objective), c.criterion.value, c.N,
            _num(c.delta), _num(c.epsilon), c.reps,
            _num(c.trigger_rate), _num(lo), _num(hi), _num(c.fn_rate), _num(c.fp_rate),
        ])
    return buf.getvalue()


def trigger_rate_sweep(plan: ExperimentPlan, parallelism: int = 1) -> list[CellResult]:
    """One SGD trajectory, then every grid cell replicated ``plan.reps`` times per checkpoint."""
    problem = plan.build_problem()
    traj = run(problem, plan.schedule, plan.run)
    cells = plan.cells()
    tasks, meta = [], []
    for c, ck in enumerate(traj.checkpoints):
        for g, (n, d) in enumerate(cells):
            tasks.append((problem, ck.point, plan.kind, n, plan.epsilon, d, plan.reps, plan.seed, (c, g)))
            meta.append((ck, n, d))
    counts = _map(tasks, parallelism)
    return [
        CellResult(ck.k, ck.grad_norm, ck.objective, plan.kind, n, d, plan.epsilon, plan.reps, hits)
        for (ck, n, d), hits in zip(meta, counts)
    ]


def nearest_to_threshold(results: list[CellResult], count: int) -> list[CellResult]:
    """The ``count`` results whose oracle gradient norm is closest to epsilon, in checkpoint order."""
    ranked = sorted(results, key=lambda c: (abs(c.oracle_grad_norm - c.epsilon), c.checkpoint_iter))
    return sorted(ranked[:count], key=lambda c: c.checkpoint_iter)


def first_below_threshold(results: list[CellResult], count: int) -> list[CellResult]:
    """The first ``count`` results, in checkpoint order, at which SC0 would stop."""
    ordered = sorted(results, key=lambda c: c.checkpoint_iter)
    return [c for c in ordered if c.should_trigger][:count]


@dataclass(frozen=True)
class FalseNegativeResult:
    rate: float
    wilson_ci: tuple[float, float]
    failures: int
    reps: int
    N: int
    gate: float
    oracle_grad_norm: float
    level: float  # 1 / gamma

    @property
    def contract_limit(self) -> float:
        return three_sigma_ceiling(self.level, self.reps)

    @property
    def within_contract(self) -> bool:
        return self.rate <= self.contract_limit

    def to_dict(self) -> dict[str, Any]:
        return {
            "rate": self.rate,
            "ci_lo": self.wilson_ci[0],
            "ci_hi": self.wilson_ci[1],
            "failures": self.failures,
            "reps": self.reps,
            "N": self.N,
            "gate": self.gate,
            "oracle_grad_norm": self.oracle_grad_norm,
            "level": self.level,
            "contract_limit": self.contract_limit,
            "within_contract": self.within_contract,
        }


def required_sample_size(problem: Problem, kind: Kind, epsilon: float, design: bounds.FalseNegativeDesign, delta_bar: float | None = None) -> int:
    """Minimum N for the false-negative guarantee, with the scenario preconditions checked."""
    kind = Kind(kind)
    bcn = problem.bcn
    if design.scenario is Scenario.B and bcn.noise_C1 != 0:
        raise ValueError(f"{problem.name} has C1 = {bcn.noise_C1}; scenario B needs C1 = 0")
    if design.scenario is Scenario.C and bcn.scenario is not Scenario.C:
        raise ValueError(f"{problem.name} does not satisfy the tail condition")
    if kind is Kind.SC1:
        return bounds.sc1_min_sample_size(bcn.noise_C1, bcn.noise_C2, epsilon, design)
    if kind is Kind.SC2:
        if delta_bar is None:
            raise ValueError("SC2 needs delta_bar")
        bounds.check_sc2_design(design.scenario, bcn.noise_C2, delta_bar, design, bcn.pareto_pi2)
        return bounds.sc2_min_sample_size(design.scenario, delta_bar, design, bcn.pareto_pi2)
    raise ValueError("false-negative control concerns SC1 and SC2")


def false_negative_rate(
    problem: Problem,
    theta,
    kind: Kind,
    N: int,
    epsilon: float,
    design: bounds.FalseNegativeDesign,
    reps: int,
    base_seed: int,
    delta: float | None = None,
    delta_bar: float | None = None,
) -> FalseNegativeResult:
    """Fraction of replications at ``theta`` in which the criterion fails to trigger.

    Raises ValueError unless ``theta`` passes the design's gradient gate and
    ``N`` reaches the matching minimum sample size.
    """
    kind = Kind(kind)
    theta = as_param_vector(theta, problem.dimension)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    need = required_sample_size(problem, kind, epsilon, design, delta_bar)
    if N < need:
        raise ValueError(f"N = {N} is below the minimum sample size {need}")
    if kind is Kind.SC2 and (delta is None or not 0 < delta < delta_bar):
        raise ValueError(f"SC2 needs a vote threshold in (0, {delta_bar}), got {delta}")
    gate = bounds.gradient_gate(kind.value, design, epsilon, problem.bcn.pareto_pi3)
    norm = problem.oracle_gradient_norm(theta)
    if norm > gate:
        raise ValueError(f"oracle gradient norm {norm} exceeds the gate {gate}; the guarantee does not apply")
    hits = count_triggers(problem, theta, kind, N, epsilon, delta, reps, base_seed, (0, 0))
    miss = reps - hits
    return FalseNegativeResult(miss / reps, wilson_interval(miss, reps), miss, reps, N, gate, norm, design.fn_level)


@dataclass(frozen=True)
class AuditCell:
    theta: np.ndarray
    kind: Kind
    N: int
    epsilon: float
    delta: float | None = None
    bound: str | None = None  # "sc1", "pareto" or "sc2"; inferred when None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        if self.kind is Kind.SC2 and self.delta is None:
            raise ValueError("SC2 audit cells need delta")
        if self.bound not in (None, "sc1", "pareto", "sc2"):
            raise ValueError(f"unknown bound {self.bound!r}")


@dataclass(frozen=True)
class AuditRow:
    index: int
    kind: Kind
    bound_name: str
    grad_norm: float
    N: int
    epsilon: float
    delta: float | None
    Delta: float | None
    bound: bounds.BoundValue
    reps: int
    triggers: int

    @property
    def empirical(self) -> float:
        return self.triggers / self.reps

    @property
    def floor(self) -> float:
        return three_sigma_floor(self.bound.value, self.reps)

    @property
    def passed(self) -> bool:
        return self.bound.vacuous or self.empirical >= self.floor


AUDIT_COLUMNS = [
    "index", "criterion", "bound_name", "grad_norm", "N", "epsilon", "delta", "Delta",
    "bound", "vacuous", "reps", "empirical", "floor", "passed",
]


def audit_to_csv(rows: list[AuditRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_COLUMNS)
    for r in rows:
        w.writerow([
            r.index, r.kind.value, r.bound_name, _num(r.grad_norm), r.N, _num(r.epsilon), _num(r.delta), _num(r.Delta),
            _num(r.bound.value), int(r.bound.vacuous), r.reps, _num(r.empirical), _num(r.floor), int(r.passed),
        ])
    return buf.getvalue()


def pass_probability(problem: Problem, theta, epsilon: float, draws: int, gen: np.random.Generator) -> float:
    """Monte Carlo estimate of ``P[||grad f(theta, X)|| <= epsilon]``."""
    hits, left = 0, draws
    while left:
        n = min(_PILOT_BLOCK, left)
        hits += sc2_votes(problem, theta, problem.sample_batch(gen, n), epsilon)
        left -= n
    return hits / draws


def _audit_bound(problem: Problem, cell: AuditCell, g: int, base_seed: int, pilot_draws: int):
    bcn = problem.bcn
    norm = problem.oracle_gradient_norm(cell.theta)
    name = cell.bound
    if name is None:
        if cell.kind is Kind.SC2:
            name = "sc2"
        else:
            name = "pareto" if bcn.scenario is Scenario.C else "sc1"
    if name == "sc1":
        return name, norm, None, bounds.sc1_trigger_lower_bound(bcn.noise_C1, bcn.noise_C2, cell.N, norm, cell.epsilon)
    if name == "pareto":
        if bcn.scenario is not Scenario.C:
            raise ValueError(f"{problem.name} does not satisfy the tail condition")
        return name, norm, None, bounds.pareto_trigger_lower_bound(
            bcn.pareto_pi2, bcn.pareto_pi3, cell.N, norm, cell.epsilon, pi1=bcn.pareto_pi1
        )
    if cell.kind is not Kind.SC2:
        raise ValueError("the vote-concentration bound applies to SC2 cells")
    p = pass_probability(problem, cell.theta, cell.epsilon, pilot_draws, lanes.stream(base_seed, lanes.PILOT, g))
    Delta = cell.delta - p
    # a non-negative gap falls outside the lemma; treat as vacuous
    value = bounds.sc2_trigger_lower_bound(cell.N, Delta) if Delta < 0 else bounds.BoundValue(0.0)
    return name, norm, Delta, value


def bound_audit(
    problem: Problem, cells: list[AuditCell], reps: int, base_seed: int, pilot_draws: int = PILOT_DRAWS, parallelism: int = 1
) -> list[AuditRow]:
    """Empirical trigger frequency against the matching lower bound for each cell.

    A cell passes when its bound is vacuous or the frequency is at least
    ``bound - 3 sqrt(bound (1 - bound) / reps)``. For SC2 cells the gap
    ``Delta = delta - P[||grad f|| <= epsilon]`` comes from a pilot of
    ``pilot_draws`` samples on a separate lane.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    prepared, tasks = [], []
    for g, cell in enumerate(cells):
        theta = as_param_vector(cell.theta, problem.dimension)
        prepared.append(_audit_bound(problem, cell, g, base_seed, pilot_draws))
        tasks.append((problem, theta, cell.kind, cell.N, cell.epsilon, cell.delta, reps, base_seed, (0, g)))
    counts = _map(tasks, parallelism)
    return [
        AuditRow(g, cell.kind, name, norm, cell.N, cell.epsilon, cell.delta, Delta, value, reps, hits)
        for g, (cell, (name, norm, Delta, value), hits) in enumerate(zip(cells, prepared, counts))
    ]
