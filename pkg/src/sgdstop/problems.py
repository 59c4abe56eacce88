"""Synthetic stochastic objectives with exact deterministic-gradient oracles.

Each problem draws outcomes as rows of a float array (its *payload*), and
computes stochastic gradients for one row or for a whole batch of rows.
The deterministic oracles (``oracle_gradient``, ``oracle_objective``) are for
scoring only; stopping criteria never touch them.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import optimize


class Scenario(str, enum.Enum):
    A = "A"  # general BCN
    B = "B"  # C1 = 0 (interpolation)
    C = "C"  # BCN plus the Pareto tail condition


@dataclass(frozen=True)
class BcnConstants:
    f_lower_bound: float
    lipschitz_C: float
    noise_C1: float
    noise_C2: float
    scenario: Scenario
    pareto_pi1: float | None = None
    pareto_pi2: float | None = None
    pareto_pi3: float | None = None
    derivation: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        for name in ("lipschitz_C", "noise_C1", "noise_C2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.scenario is Scenario.B and self.noise_C1 != 0:
            raise ValueError("scenario B requires noise_C1 = 0")
        if self.scenario is Scenario.C:
            pis = (self.pareto_pi1, self.pareto_pi2, self.pareto_pi3)
            if any(v is None for v in pis):
                raise ValueError("scenario C requires pareto_pi1, pareto_pi2, pareto_pi3")
            if not (0 < self.pareto_pi1 < 1 and 0 < self.pareto_pi2 < 1):
                raise ValueError("pareto_pi1 and pareto_pi2 must lie in (0, 1)")
            if not self.pareto_pi3 >= 1:
                raise ValueError("pareto_pi3 must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "f_lower_bound": self.f_lower_bound,
            "lipschitz_C": self.lipschitz_C,
            "noise_C1": self.noise_C1,
            "noise_C2": self.noise_C2,
            "pareto_pi1": self.pareto_pi1,
            "pareto_pi2": self.pareto_pi2,
            "pareto_pi3": self.pareto_pi3,
            "scenario": self.scenario.value,
            "derivation": self.derivation,
        }


def as_param_vector(theta, p: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = theta.reshape(1)
    if theta.shape != (p,):
        raise ValueError(f"expected a parameter vector of length {p}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector has non-finite entries")
    return theta


class Problem(ABC):
    """A stochastic objective ``F(theta) = E f(theta, X)``.

    Subclasses set ``name``, ``dimension``, ``payload_width`` and ``bcn``, and
    implement the batch sampler plus the unchecked gradient kernels
    ``_grad`` (one outcome) and ``_grads`` (rows of outcomes).
    """

    name: str
    dimension: int
    payload_width: int
    bcn: BcnConstants

    @abstractmethod
    def sample_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` i.i.d. outcomes as an ``(n, payload_width)`` array."""

    @abstractmethod
    def _grad(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _grads(self, theta: np.ndarray, xs: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def stochastic_objective(self, theta, x) -> float: ...

    @abstractmethod
    def oracle_gradient(self, theta) -> np.ndarray: ...

    @abstractmethod
    def oracle_objective(self, theta) -> float: ...

    @abstractmethod
    def params(self) -> dict[str, Any]:
        """Constructor arguments, JSON-friendly."""

    @abstractmethod
    def point_with_gradient_norm(self, norm: float, rng: np.random.Generator | None = None) -> np.ndarray:
        """Return some theta whose oracle gradient has the requested norm."""

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(rng, 1)[0]

    def _check_payload(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.payload_width,):
            raise ValueError(f"{self.name} outcomes have width {self.payload_width}, got shape {x.shape}")
        return x

    def stochastic_gradient(self, theta, x) -> np.ndarray:
        theta = as_param_vector(theta, self.dimension)
        return self._grad(theta, self._check_payload(x))

    def stochastic_gradients(self, theta, xs) -> np.ndarray:
        """Gradients for each row of ``xs``; shape ``(n, dimension)``."""
        theta = as_param_vector(theta, self.dimension)
        xs = self._check_payload(xs)
        return self._grads(theta, xs.reshape(-1, self.payload_width))

    def oracle_gradient_norm(self, theta) -> float:
        return float(np.linalg.norm(self.oracle_gradient(theta)))

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class LinearRegression(Problem):
    """Least squares ``f = (a'theta - y)^2 / 2`` with ``a ~ N(0, cov)``.

    ``y = a'theta_star + noise_std * xi``. Scenario B when ``noise_std == 0``.
    Payload rows are ``[a_1, ..., a_d, y]``.

    For Gaussian features, with ``e = theta - theta_star``,
    ``E||grad f - grad F||^2 = ||cov e||^2 + (e'cov e) tr(cov) + noise_std^2 tr(cov)``,
    hence ``C1 = noise_std^2 tr(cov)`` and ``C2 = 1 + tr(cov) / lambda_min(cov)``
    (tight when ``cov`` is a multiple of the identity).
    """

    name = "linear_regression"

    def __init__(self, dimension: int = 2, cov=None, theta_star=None, noise_std: float = 0.0):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.payload_width = self.dimension + 1
        cov = np.eye(self.dimension) if cov is None else np.asarray(cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.dimension, self.dimension) or not np.allclose(cov, cov.T):
            raise ValueError("cov must be a symmetric dimension x dimension matrix")
        eig = np.linalg.eigvalsh(cov)
        if eig[0] <= 0:
            raise ValueError("cov must be positive definite")
        self.cov = cov
        self._chol = np.linalg.cholesky(cov)
        self.theta_star = (
            np.zeros(self.dimension) if theta_star is None else as_param_vector(theta_star, self.dimension)
        )
        if noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        self.noise_std = float(noise_std)
        trace = float(np.trace(cov))
        self.bcn = BcnConstants(
            f_lower_bound=0.5 * self.noise_std**2,
            lipschitz_C=float(eig[-1]),
            noise_C1=self.noise_std**2 * trace,
            noise_C2=1.0 + trace / float(eig[0]),
            scenario=Scenario.A if self.noise_std > 0 else Scenario.B,
            derivation="analytic: Gaussian fourth moments; C = lambda_max(cov)",
        )

    def params(self):
        return {
            "dimension": self.dimension,
            "cov": self.cov.tolist(),
            "theta_star": self.theta_star.tolist(),
            "noise_std": self.noise_std,
        }

    def sample_batch(self, rng, n):
        a = rng.standard_normal((n, self.dimension)) @ self._chol.T
        y = a @ self.theta_star
        if self.noise_std > 0:
            y = y + self.noise_std * rng.standard_normal(n)
        return np.column_stack([a, y])

    def _grad(self, theta, x):
        a = x[:-1]
        return (a @ theta - x[-1]) * a

    def _grads(self, theta, xs):
        a = xs[:, :-1]
        return (a @ theta - xs[:, -1])[:, None] * a

    def stochastic_objective(self, theta, x):
        theta = as_param_vector(theta, self.dimension)
        x = self._check_payload(x)
        return 0.5 * float(x[:-1] @ theta - x[-1]) ** 2

    def oracle_gradient(self, theta):
        theta = as_param_vector(theta, self.dimension)
        return self.cov @ (theta - self.theta_star)

    def oracle_objective(self, theta):
        e = as_param_vector(theta, self.dimension) - self.theta_star
        return 0.5 * float(e @ self.cov @ e) + 0.5 * self.noise_std**2

    def noise_second_moment(self, theta) -> float:
        """Exact ``E||grad f - grad F||^2`` at ``theta``."""
        e = as_param_vector(theta, self.dimension) - self.theta_star
        g = self.cov @ e
        trace = float(np.trace(self.cov))
        return float(g @ g + (e @ g) * trace + self.noise_std**2 * trace)

    def point_with_gradient_norm(self, norm, rng=None):
        direction = _unit_direction(self.dimension, rng)
        return self.theta_star + np.linalg.solve(self.cov, norm * direction)


class Rademacher(Problem):
    """``f(theta, X) = theta * X`` with ``X`` uniform on {-1, +1}.

    ``F`` is identically zero, yet every stochastic gradient has norm one.
    """

    name = "rademacher"
    dimension = 1
    payload_width = 1

    def __init__(self):
        self.bcn = BcnConstants(
            f_lower_bound=0.0,
            lipschitz_C=0.0,
            noise_C1=1.0,
            noise_C2=0.0,
            scenario=Scenario.A,
            derivation="analytic: E X^2 = 1, grad F = 0",
        )

    def params(self):
        return {}

    def sample_batch(self, rng, n):
        return (2.0 * rng.integers(0, 2, size=(n, 1)) - 1.0)

    def _grad(self, theta, x):
        return x.copy()

    def _grads(self, theta, xs):
        return xs.copy()

    def stochastic_objective(self, theta, x):
        theta = as_param_vector(theta, 1)
        return float(theta[0] * self._check_payload(x)[0])

    def oracle_gradient(self, theta):
        as_param_vector(theta, 1)
        return np.zeros(1)

    def oracle_objective(self, theta):
        as_param_vector(theta, 1)
        return 0.0

    def noise_second_moment(self, theta) -> float:
        return 1.0

    def point_with_gradient_norm(self, norm, rng=None):
        if norm != 0:
            raise ValueError("the Rademacher objective has zero gradient everywhere")
        return np.zeros(1)


class SineWell(Problem):
    """Nonconvex ``F(theta) = ||theta||^2 / 2 + amplitude * sum(sin(theta_i))``.

    Stochastic gradients add isotropic Gaussian noise: ``grad f = grad F + xi``,
    ``xi ~ N(0, noise_std^2 I)``, from ``f = F + xi'theta``. The Hessian is
    ``I - amplitude * diag(sin theta)`` so ``C = 1 + amplitude``.
    """

    name = "sine_well"

    def __init__(self, dimension: int = 10, amplitude: float = 2.0, noise_std: float = 0.1):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if amplitude < 0 or noise_std < 0:
            raise ValueError("amplitude and noise_std must be >= 0")
        self.dimension = int(dimension)
        self.payload_width = self.dimension
        self.amplitude = float(amplitude)
        self.noise_std = float(noise_std)
        c1 = self.noise_std**2 * self.dimension
        self.bcn = BcnConstants(
            f_lower_bound=-self.amplitude * self.dimension,
            lipschitz_C=1.0 + self.amplitude,
            noise_C1=c1,
            noise_C2=0.0,
            scenario=Scenario.A if c1 > 0 else Scenario.B,
            derivation="analytic: additive isotropic Gaussian noise; Hessian eigenvalues in [1-a, 1+a]",
        )

    def params(self):
        return {"dimension": self.dimension, "amplitude": self.amplitude, "noise_std": self.noise_std}

    def sample_batch(self, rng, n):
        return self.noise_std * rng.standard_normal((n, self.dimension))

    def _grad(self, theta, x):
        return theta + self.amplitude * np.cos(theta) + x

    def _grads(self, theta, xs):
        return (theta + self.amplitude * np.cos(theta)) + xs

    def stochastic_objective(self, theta, x):
        theta = as_param_vector(theta, self.dimension)
        return self.oracle_objective(theta) + float(self._check_payload(x) @ theta)

    def oracle_gradient(self, theta):
        theta = as_param_vector(theta, self.dimension)
        return theta + self.amplitude * np.cos(theta)

    def oracle_objective(self, theta):
        theta = as_param_vector(theta, self.dimension)
        return 0.5 * float(theta @ theta) + self.amplitude * float(np.sum(np.sin(theta)))

    def noise_second_moment(self, theta) -> float:
        return self.noise_std**2 * self.dimension

    def stationary_coordinate(self) -> float:
        """The coordinate value of the local minimizer nearest zero from below."""
        h = lambda t: t + self.amplitude * math.cos(t)  # noqa: E731
        if self.amplitude == 0:
            return 0.0
        return optimize.brentq(h, -self.amplitude - 1.0, 0.0, xtol=1e-15)

    def point_with_gradient_norm(self, norm, rng=None):
        # Moves each coordinate along the increasing branch of t + a cos t
        # around the local minimizer, so the gradient hits the target exactly.
        target = norm * _unit_direction(self.dimension, rng)
        t0 = self.stationary_coordinate()
        a = self.amplitude
        if a > 1:
            # increasing branch between the critical points where sin t = 1/a
            lo = -math.pi - math.asin(1.0 / a)
            hi = math.asin(1.0 / a)
        else:
            lo, hi = t0 - 10.0 - 2 * a, t0 + 10.0 + 2 * a
        out = np.empty(self.dimension)
        for i, c in enumerate(target):
            h = lambda t: t + a * math.cos(t) - c  # noqa: E731
            if not h(lo) < 0 < h(hi):
                raise ValueError(f"gradient norm {norm} not reachable on the local branch")
            out[i] = optimize.brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return out


class ParetoTail(Problem):
    """Heavy-tailed multiplicative noise on ``F(theta) = ||theta||^2 / 2``.

    ``grad f(theta, V) = V * theta / E[V]`` with ``V`` a Pareto variable of
    index ``tail_index`` truncated to ``[1, v_max]``. Truncation keeps every
    moment finite, so the BCN constants hold with ``C1 = 0`` and
    ``C2 = Var(V) / E[V]^2``. The tail condition holds everywhere with
    ``pi2 = tail_index`` and ``pi3 = max(1, (1 - v_max^-alpha)^(-1/alpha) / E[V])``;
    ``pi1`` is free in (0, 1) and taken from the constructor.
    Payload rows are ``[V]``.
    """

    name = "pareto_tail"

    def __init__(self, dimension: int = 2, tail_index: float = 0.5, v_max: float = 100.0, pi1: float = 0.5):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 < tail_index < 1:
            raise ValueError("tail_index must lie in (0, 1)")
        if not v_max > 1:
            raise ValueError("v_max must exceed 1")
        self.dimension = int(dimension)
        self.payload_width = 1
        self.tail_index = float(tail_index)
        self.v_max = float(v_max)
        self.pi1 = float(pi1)
        self._mass = 1.0 - self.v_max ** (-self.tail_index)
        self.mean_v = self.moment(1)
        var_v = self.moment(2) - self.mean_v**2
        pi3 = max(1.0, self._mass ** (-1.0 / self.tail_index) / self.mean_v)
        self.bcn = BcnConstants(
            f_lower_bound=0.0,
            lipschitz_C=1.0,
            noise_C1=0.0,
            noise_C2=var_v / self.mean_v**2,
            scenario=Scenario.C,
            pareto_pi1=self.pi1,
            pareto_pi2=self.tail_index,
            pareto_pi3=pi3,
            derivation="analytic: truncated-Pareto moments and survival bound; certified by empirical tail check",
        )

    def params(self):
        return {"dimension": self.dimension, "tail_index": self.tail_index, "v_max": self.v_max, "pi1": self.pi1}

    def moment(self, r: float) -> float:
        """``E[V^r]`` for the truncated Pareto law."""
        alpha = self.tail_index
        if r == alpha:
            return alpha * math.log(self.v_max) / self._mass
        return alpha / self._mass * (self.v_max ** (r - alpha) - 1.0) / (r - alpha)

    def survival(self, v) -> np.ndarray:
        """``P[V >= v]``."""
        v = np.asarray(v, dtype=float)
        alpha = self.tail_index
        inside = (np.clip(v, 1.0, self.v_max) ** (-alpha) - self.v_max ** (-alpha)) / self._mass
        return np.where(v <= 1.0, 1.0, np.where(v > self.v_max, 0.0, inside))

    def sample_batch(self, rng, n):
        u = rng.random(n)
        v = (1.0 - u * self._mass) ** (-1.0 / self.tail_index)
        return np.minimum(v, self.v_max)[:, None]

    def _grad(self, theta, x):
        return (x[0] / self.mean_v) * theta

    def _grads(self, theta, xs):
        return (xs[:, :1] / self.mean_v) * theta

    def stochastic_objective(self, theta, x):
        theta = as_param_vector(theta, self.dimension)
        return float(self._check_payload(x)[0] / self.mean_v) * 0.5 * float(theta @ theta)

    def oracle_gradient(self, theta):
        return as_param_vector(theta, self.dimension).copy()

    def oracle_objective(self, theta):
        theta = as_param_vector(theta, self.dimension)
        return 0.5 * float(theta @ theta)

    def noise_second_moment(self, theta) -> float:
        theta = as_param_vector(theta, self.dimension)
        return self.bcn.noise_C2 * float(theta @ theta)

    def point_with_gradient_norm(self, norm, rng=None):
        return norm * _unit_direction(self.dimension, rng)


def _unit_direction(p: int, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None:
        return np.full(p, 1.0 / math.sqrt(p))
    v = rng.standard_normal(p)
    return v / np.linalg.norm(v)


PROBLEMS: dict[str, type[Problem]] = {
    cls.name: cls for cls in (LinearRegression, Rademacher, SineWell, ParetoTail)
}


def make_problem(name: str, **params) -> Problem:
    try:
        cls = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return cls(**params)
