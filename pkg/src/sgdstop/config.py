"""Experiment configuration files: YAML text checked against a bundled JSON schema.

Loading happens in two passes. The schema pass rejects unknown keys and
out-of-range scalars and reports ``file:line:col: field: message``; the
semantic pass builds the problem, schedule, run and criterion objects and
reports whatever invariant they refuse, tagged with the owning section.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

import jsonschema
import numpy as np
import yaml

from sgdstop import bounds
from sgdstop.montecarlo import AuditCell, ExperimentPlan, required_sample_size
from sgdstop.problems import Problem, make_problem
from sgdstop.schedule import ScheduleSpec
from sgdstop.sgd import RunConfig
from sgdstop.stopping import CriterionConfig, EvalSchedule, Kind, SampleSizeRule, VoteThresholdRule

DEFAULT_CERTIFY_HORIZON = 10_000


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


class _Loader(yaml.SafeLoader):
    pass


# PyYAML follows YAML 1.1 and reads "1e-5" as a string; accept the usual float spellings.
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@lru_cache(maxsize=1)
def schema() -> dict[str, Any]:
    text = resources.files("sgdstop").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _locate(node, path) -> tuple[int, int] | None:
    """Line and column (1-based) of the YAML node at ``path``, or its nearest ancestor."""
    where = (node.start_mark.line + 1, node.start_mark.column + 1) if node is not None else None
    for part in path:
        child = None
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(part):
                    child = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            child = node.value[part]
        if child is None:
            break
        node = child
        where = (node.start_mark.line + 1, node.start_mark.column + 1)
    return where


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _schema_errors(data, root, source: str) -> list[str]:
    validator = jsonschema.Draft202012Validator(schema())
    out = []
    for err in sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            extra = sorted(k for k in err.instance if k not in allowed)
            if extra:
                path = path + [extra[0]]
                msg = f"unknown key(s) {extra}; allowed: {sorted(allowed)}"
            else:
                msg = err.message
        else:
            msg = err.message
        loc = _locate(root, path)
        prefix = f"{source}:{loc[0]}:{loc[1]}" if loc else source
        out.append(f"{prefix}: {_dotted(path)}: {msg}")
    return out


def _rule(value, cls):
    if isinstance(value, dict):
        return cls(**value)
    return cls(base=value)


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict[str, Any]
    source: str = "<config>"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> ExperimentConfig:
        try:
            root = yaml.compose(text, Loader=_Loader)
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError([f"{source}: malformed YAML: {exc}"]) from None
        if data is None:
            data = {}
        errors = _schema_errors(data, root, source)
        if errors:
            raise ConfigError(errors)
        cfg = cls(data, source)
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=None)

    def with_overrides(self, seed: int | None = None, reps: int | None = None) -> ExperimentConfig:
        data = copy.deepcopy(self.data)
        if seed is not None:
            data["run"]["seed"] = seed
            data.get("montecarlo", {}).pop("base_seed", None)
        if reps is not None:
            data.setdefault("montecarlo", {})["reps"] = reps
        return ExperimentConfig.from_text(yaml.safe_dump(data, sort_keys=False), self.source)

    def _section(self, name: str) -> dict[str, Any]:
        return self.data.get(name) or {}

    def _fail(self, section: str, exc: Exception):
        raise ConfigError([f"{self.source}: {section}: {exc}"]) from None

    def check(self) -> None:
        """Build every configured object once so invariant violations surface at load time."""
        self.problem()
        self.schedule()
        self.run_config()
        if "criterion" in self.data:
            self.criterion()
        if "montecarlo" in self.data:
            mc = self._section("montecarlo")
            if "criterion" in self.data and mc.get("grid") is not None:
                self.plan()
            if "fn" in mc:
                self.design()
            if "audit" in mc:
                self.audit_cells()

    def problem(self) -> Problem:
        p = self._section("problem")
        try:
            return make_problem(p["name"], **(p.get("params") or {}))
        except (TypeError, ValueError) as exc:
            self._fail("problem", exc)

    def schedule(self) -> ScheduleSpec:
        s = self._section("schedule")
        try:
            return ScheduleSpec.from_dict({"family": s["family"], "params": s.get("params") or {}}, self.problem().dimension)
        except (TypeError, ValueError, KeyError) as exc:
            self._fail("schedule", exc)

    @property
    def certify_horizon(self) -> int:
        return int(self._section("schedule").get("horizon", DEFAULT_CERTIFY_HORIZON))

    def run_config(self) -> RunConfig:
        r = self._section("run")
        init = r["init"]
        p = self.problem().dimension
        try:
            if "std" in init:
                start = {"init_std": float(init["std"])}
            elif "fill" in init:
                start = {"initial_point": np.full(p, float(init["fill"]))}
            else:
                start = {"initial_point": np.asarray(init["point"], dtype=float)}
                if start["initial_point"].shape != (p,):
                    raise ValueError(f"init.point has {start['initial_point'].size} entries, problem has p={p}")
            return RunConfig(seed=int(r["seed"]), budget=int(r["budget"]), checkpoint_every=int(r["checkpoint_every"]), **start)
        except (TypeError, ValueError) as exc:
            self._fail("run", exc)

    @property
    def kind(self) -> Kind:
        if "criterion" not in self.data:
            raise ConfigError([f"{self.source}: criterion: section required for this command"])
        return Kind(self._section("criterion")["kind"])

    def criterion(self) -> CriterionConfig:
        c = self._section("criterion")
        kind = self.kind
        run = self.run_config()
        try:
            if "points" in c and "stride" in c:
                raise ValueError("give stride or points, not both")
            sched = EvalSchedule(points=tuple(c["points"])) if "points" in c else EvalSchedule(stride=int(c.get("stride", run.checkpoint_every)))
            default_evals = len(sched.points) if sched.points else max(1, run.budget // sched.stride)
            if kind is not Kind.SC0 and "N" not in c:
                raise ValueError(f"{kind.value} needs an N rule")
            if kind is Kind.SC2 and "delta" not in c:
                raise ValueError("SC2 needs a delta rule")
            return CriterionConfig(
                epsilon=float(c["epsilon"]),
                sample_size_rule=_rule(c.get("N", 1), SampleSizeRule),
                eval_schedule=sched,
                max_evaluations=int(c.get("max_evaluations", default_evals)),
                vote_threshold_rule=_rule(c["delta"], VoteThresholdRule) if "delta" in c else None,
                delta_bar=c.get("delta_bar"),
            )
        except (TypeError, ValueError) as exc:
            self._fail("criterion", exc)

    @property
    def reps(self) -> int:
        return int(self._section("montecarlo").get("reps", 100))

    @property
    def base_seed(self) -> int:
        return int(self._section("montecarlo").get("base_seed", self.run_config().seed))

    def plan(self) -> ExperimentPlan:
        c = self._section("criterion")
        grid = self._section("montecarlo").get("grid") or {}

        def base(v):
            return v["base"] if isinstance(v, dict) else v

        sizes = grid.get("N", [base(c["N"])] if "N" in c else [])
        deltas = grid.get("delta", [base(c["delta"])] if "delta" in c else [])
        p = self._section("problem")
        try:
            return ExperimentPlan(
                problem_name=p["name"],
                problem_params=dict(p.get("params") or {}),
                schedule=self.schedule(),
                run=self.run_config(),
                kind=self.kind,
                epsilon=float(c["epsilon"]),
                sample_sizes=tuple(sizes),
                deltas=tuple(deltas) if self.kind is Kind.SC2 else (),
                reps=self.reps,
                base_seed=self.base_seed,
            )
        except (TypeError, ValueError) as exc:
            self._fail("montecarlo.grid", exc)

    def design(self) -> bounds.FalseNegativeDesign:
        f = self._section("montecarlo").get("fn")
        if f is None:
            raise ConfigError([f"{self.source}: montecarlo.fn: section required for this command"])
        try:
            return bounds.FalseNegativeDesign(f["rho"], f["gamma"], f.get("scenario", self.problem().bcn.scenario))
        except (TypeError, ValueError) as exc:
            self._fail("montecarlo.fn", exc)

    def fn_setup(self) -> dict[str, Any]:
        """Resolved arguments for a false-negative check: theta at the gate, N at the minimum."""
        f = self._section("montecarlo")["fn"]
        problem = self.problem()
        crit = self.criterion()
        design = self.design()
        kind = self.kind
        try:
            need = required_sample_size(problem, kind, crit.epsilon, design, crit.delta_bar)
            gate = bounds.gradient_gate(kind.value, design, crit.epsilon, problem.bcn.pareto_pi3)
            norm = f.get("grad_norm", gate)
            return {
                "problem": problem,
                "theta": problem.point_with_gradient_norm(norm),
                "kind": kind,
                "N": int(f.get("N", need)),
                "epsilon": crit.epsilon,
                "design": design,
                "reps": self.reps,
                "base_seed": self.base_seed,
                "delta": crit.vote_threshold(1) if kind is Kind.SC2 else None,
                "delta_bar": crit.delta_bar,
            }
        except (TypeError, ValueError) as exc:
            self._fail("montecarlo.fn", exc)

    def audit_cells(self) -> list[AuditCell]:
        a = self._section("montecarlo").get("audit")
        if a is None:
            raise ConfigError([f"{self.source}: montecarlo.audit: section required for this command"])
        problem = self.problem()
        cells = []
        for i, c in enumerate(a["cells"]):
            try:
                cells.append(AuditCell(
                    theta=problem.point_with_gradient_norm(c["grad_norm"]), kind=c["kind"], N=c["N"], epsilon=c["epsilon"],
                    delta=c.get("delta"), bound=c.get("bound"),
                ))
            except (TypeError, ValueError) as exc:
                self._fail(f"montecarlo.audit.cells.{i}", exc)
        return cells

    @property
    def pilot_draws(self) -> int | None:
        return (self._section("montecarlo").get("audit") or {}).get("pilot_draws")
