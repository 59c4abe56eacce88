"""The SGD recurrence ``beta_{k+1} = beta_k - M_k grad f(beta_k, X_{k+1})``."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from sgdstop import rng as lanes
from sgdstop.problems import Problem, as_param_vector
from sgdstop.schedule import Family, ScheduleSpec, StepMatrix, step_matrix

SAMPLE_BLOCK = 4096


class DivergenceError(RuntimeError):
    """A non-finite iterate appeared; ``partial`` holds what was recorded before."""

    def __init__(self, message: str, partial=None, iteration: int | None = None):
        super().__init__(message)
        self.partial = partial
        self.iteration = iteration


@dataclass(frozen=True)
class RunConfig:
    seed: int
    budget: int
    checkpoint_every: int
    initial_point: np.ndarray | None = None
    init_std: float | None = None  # seed-derived Gaussian start when no point is given

    def __post_init__(self):
        if self.budget < 1 or self.checkpoint_every < 1:
            raise ValueError("budget and checkpoint_every must be >= 1")
        if self.budget < self.checkpoint_every:
            raise ValueError("budget must be >= checkpoint_every")
        if (self.initial_point is None) == (self.init_std is None):
            raise ValueError("give exactly one of initial_point or init_std")
        if self.initial_point is not None:
            object.__setattr__(self, "initial_point", np.atleast_1d(np.asarray(self.initial_point, dtype=float)))
        elif not self.init_std > 0:
            raise ValueError("init_std must be > 0")

    def start(self, dimension: int) -> np.ndarray:
        if self.initial_point is not None:
            return as_param_vector(self.initial_point, dimension).copy()
        return self.init_std * lanes.stream(self.seed, lanes.INITIAL_POINT).standard_normal(dimension)

    def replace(self, **changes) -> RunConfig:
        d = {
            "seed": self.seed,
            "budget": self.budget,
            "checkpoint_every": self.checkpoint_every,
            "initial_point": self.initial_point,
            "init_std": self.init_std,
        }
        d.update(changes)
        return RunConfig(**d)


@dataclass(frozen=True)
class Checkpoint:
    k: int
    point: np.ndarray
    grad_norm: float
    objective: float


@dataclass
class Trajectory:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    final_point: np.ndarray | None = None
    samples_drawn: int = 0

    def grad_norms(self) -> np.ndarray:
        return np.array([c.grad_norm for c in self.checkpoints])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "grad_norm", "objective"])
        for c in self.checkpoints:
            w.writerow([c.k, repr(float(c.grad_norm)), repr(float(c.objective))])
        return buf.getvalue()

    def final_params_json(self) -> str:
        return json.dumps({"final_point": [float(v) for v in self.final_point]}, indent=2) + "\n"


def step(theta: np.ndarray, m: StepMatrix, g: np.ndarray) -> np.ndarray:
    """One SGD update ``theta - M g``."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    if theta.shape != g.shape or m.matrix.shape != (theta.size, theta.size):
        raise ValueError(f"dimension mismatch: theta {theta.shape}, M {m.matrix.shape}, g {g.shape}")
    out = theta - m.apply(g)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("SGD step produced a non-finite iterate")
    return out


class Iterates:
    """Stateful SGD iterate sequence that can be advanced to any later k.

    Draws exactly one outcome per iteration from the trajectory lane of
    ``cfg.seed``; ``samples_drawn`` counts them.
    """

    def __init__(self, problem: Problem, spec: ScheduleSpec, cfg: RunConfig):
        if spec.dimension != problem.dimension:
            raise ValueError(f"schedule dimension {spec.dimension} != problem dimension {problem.dimension}")
        if spec.horizon is not None and spec.horizon < cfg.budget:
            raise ValueError(f"explicit schedule defines {spec.horizon} steps, budget is {cfg.budget}")
        self.problem = problem
        self.spec = spec
        self.cfg = cfg
        self.k = 0
        self.theta = cfg.start(problem.dimension)
        self.samples_drawn = 0
        self._gen = lanes.stream(cfg.seed, lanes.TRAJECTORY)

    def advance_to(self, stop: int) -> np.ndarray:
        if stop < self.k:
            raise ValueError(f"cannot move back from k={self.k} to k={stop}")
        if stop > self.cfg.budget:
            raise ValueError(f"k={stop} exceeds the budget {self.cfg.budget}")
        problem, spec = self.problem, self.spec
        grad = problem._grad
        theta, k = self.theta, self.k
        with np.errstate(over="ignore", invalid="ignore"):
            while k < stop:
                n = min(SAMPLE_BLOCK, stop - k)
                xs = problem.sample_batch(self._gen, n)
                self.samples_drawn += n
                if spec.family is Family.EXPLICIT_LIST:
                    for i in range(n):
                        theta = theta - step_matrix(spec, k + i).apply(grad(theta, xs[i]))
                else:
                    r = spec.rates(np.arange(k, k + n))
                    if spec.is_scalar:
                        for i in range(n):
                            theta = theta - r[i] * grad(theta, xs[i])
                    else:
                        diag = spec.base_diagonal
                        for i in range(n):
                            theta = theta - (r[i] * diag) * grad(theta, xs[i])
                # non-finite values persist, so one check per block suffices
                if not np.all(np.isfinite(theta)):
                    raise DivergenceError(f"non-finite iterate by iteration {k + n}", iteration=k + n)
                k += n
                self.theta, self.k = theta, k
        return theta


def checkpoint_iterations(cfg: RunConfig) -> list[int]:
    ks = list(range(0, cfg.budget + 1, cfg.checkpoint_every))
    if ks[-1] != cfg.budget:
        ks.append(cfg.budget)
    return ks


def run(problem: Problem, spec: ScheduleSpec, cfg: RunConfig) -> Trajectory:
    """Run ``cfg.budget`` iterations, checkpointing every ``cfg.checkpoint_every``."""
    traj = Trajectory()
    seq = Iterates(problem, spec, cfg)
    try:
        for k in checkpoint_iterations(cfg):
            theta = seq.advance_to(k)
            with np.errstate(over="ignore", invalid="ignore"):
                norm, obj = problem.oracle_gradient_norm(theta), problem.oracle_objective(theta)
            # a finite iterate can still overflow the oracle
            if not (np.isfinite(norm) and np.isfinite(obj)):
                raise DivergenceError(f"non-finite oracle value at iteration {k}", iteration=k)
            traj.checkpoints.append(Checkpoint(k, theta.copy(), norm, obj))
    except DivergenceError as exc:
        traj.samples_drawn = seq.samples_drawn
        exc.partial = traj
        raise
    traj.final_point = seq.theta.copy()
    traj.samples_drawn = seq.samples_drawn
    return traj
