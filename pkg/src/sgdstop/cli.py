"""Command-line entry point.

Exit status is 0 on success, 1 on a validation error (bad config, bad
arguments, a precondition that does not hold) and 2 when SGD diverges.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from sgdstop import bounds, montecarlo
from sgdstop.config import ConfigError, ExperimentConfig
from sgdstop.schedule import certify
from sgdstop.sgd import DivergenceError, run
from sgdstop.stopping import NonFiniteSampleError, run_with_criterion

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _sidecar(out: str | None, suffix: str, text: str) -> None:
    if out is not None:
        p = Path(out)
        p.with_name(p.stem + suffix).write_text(text, encoding="utf-8")


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError([f"{args.command}: --config is required"])
    cfg = ExperimentConfig.from_file(args.config)
    return cfg.with_overrides(seed=args.seed, reps=args.reps) if args.seed is not None or args.reps is not None else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    traj = run(cfg.problem(), cfg.schedule(), cfg.run_config())
    _emit(traj.to_csv(), args.out)
    _sidecar(args.out, ".params.json", traj.final_params_json())
    return EXIT_OK


def cmd_stop(args) -> int:
    cfg = _load(args)
    report = run_with_criterion(cfg.problem(), cfg.schedule(), cfg.run_config(), cfg.criterion(), cfg.kind)
    _emit(report.to_csv(), args.out)
    _sidecar(args.out, ".summary.json", _json(report.summary()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    results = montecarlo.trigger_rate_sweep(cfg.plan(), parallelism=args.parallelism)
    _emit(montecarlo.cells_to_csv(results), args.out)
    return EXIT_OK


def cmd_fn_rate(args) -> int:
    cfg = _load(args)
    res = montecarlo.false_negative_rate(**cfg.fn_setup())
    _emit(_json(res.to_dict()), args.out)
    return EXIT_OK


def cmd_bound_audit(args) -> int:
    cfg = _load(args)
    extra = {} if cfg.pilot_draws is None else {"pilot_draws": cfg.pilot_draws}
    rows = montecarlo.bound_audit(cfg.problem(), cfg.audit_cells(), cfg.reps, cfg.base_seed, parallelism=args.parallelism, **extra)
    _emit(montecarlo.audit_to_csv(rows), args.out)
    return EXIT_OK


def cmd_validate_schedule(args) -> int:
    cfg = _load(args)
    problem = cfg.problem()
    cert = certify(cfg.schedule(), problem.bcn.lipschitz_C, problem.bcn.noise_C2, cfg.certify_horizon)
    _emit(_json(cert.to_dict()), args.out)
    return EXIT_OK


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_assignments(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key] = _scalar(value)
    return out


def evaluate_formula(name: str, kwargs: dict) -> dict:
    """Evaluate a bounds formula by name; ``rho``, ``gamma`` form the design when present."""
    try:
        fn = bounds.FORMULAS[name]
    except KeyError:
        raise ValueError(f"unknown formula {name!r}; choose from {sorted(bounds.FORMULAS)}") from None
    kwargs = dict(kwargs)
    if "rho" in kwargs or "gamma" in kwargs:
        kwargs["design"] = bounds.FalseNegativeDesign(
            kwargs.pop("rho"), kwargs.pop("gamma"), kwargs.get("scenario", "A")
        )
    value = fn(**kwargs)
    if isinstance(value, bounds.BoundValue):
        return {"formula": name, "value": value.value, "vacuous": value.vacuous}
    if isinstance(value, tuple):
        return {"formula": name, "value": list(value), "vacuous": None}
    return {"formula": name, "value": value, "vacuous": None}


def cmd_bounds(args) -> int:
    try:
        result = evaluate_formula(args.formula, parse_assignments(args.assignments))
    except TypeError as exc:
        raise ValueError(str(exc)) from None
    if isinstance(result["value"], float) and not math.isfinite(result["value"]):
        result["value"] = repr(result["value"])
    _emit(_json(result), args.out)
    return EXIT_OK


COMMANDS = {
    "run": (cmd_run, "run SGD and write the checkpoint trajectory as CSV"),
    "stop": (cmd_stop, "run SGD with a stopping criterion and write the evaluation records"),
    "sweep": (cmd_sweep, "trigger rates at every checkpoint for every grid cell"),
    "fn-rate": (cmd_fn_rate, "empirical false-negative rate at the gradient gate"),
    "bound-audit": (cmd_bound_audit, "empirical trigger frequency against the closed-form lower bounds"),
    "bounds": (cmd_bounds, "evaluate one closed-form formula"),
    "validate-schedule": (cmd_validate_schedule, "certify a learning-rate schedule"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--reps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--parallelism", type=int, default=1)
    parser = argparse.ArgumentParser(prog="sgdstop", description="SGD stopping-criteria experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "bounds":
            p.add_argument("formula")
            p.add_argument("assignments", nargs="*", metavar="key=value")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.reps is not None and args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.parallelism < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except (DivergenceError, NonFiniteSampleError) as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
