"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or config, 2 assumption violated,
3 numerical failure (including a failing property suite).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

import numpy as np

from .bounds import bound_assumption, event_delta
from .errors import AssumptionViolatedError, InvalidInputError, InvalidParameterError, NumericalFailure, RankDeficiencyError
from .harness import ExperimentConfig, build_problem, load_config, problem_bound, run_experiment, write_reports
from .matrix_core import principal_angles
from .pls import krylov_matrix, nipals_weights, pls_assumption, theta_matrix
from .properties import SUITES, run_suites

EXIT_OK, EXIT_INPUT, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 1, 2, 3

#: Used by ``pls-demo`` when no config is given.
DEFAULT_PLS_CONFIG = {
    "schema_version": 1,
    "scenario": "pls",
    "n": 200,
    "K": 3,
    "delta": 0.05,
    "trials": 200,
    "seed": 2024,
    "pls": {"p": 30, "spectrum": {"kind": "geometric", "ratio": 0.7}, "beta": {"kind": "ones"}, "design_seed": 7, "tau2": {"e1_ratio": 2}},
}


def _print_json(obj: object) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, trials=args.trials)


def cmd_bound(args: argparse.Namespace) -> int:
    report = problem_bound(build_problem(_config(args)))
    _print_json(report.to_dict())
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    cfg = _config(args)
    problem = build_problem(cfg)
    if problem.pls_instance is not None:
        inst = problem.pls_instance
        G = krylov_matrix(inst.Sigma, inst.sigma, cfg.K)
        holds, margin = pls_assumption(theta_matrix(inst, G), inst.Sigma, inst.tau2, inst.n, cfg.K, event_delta(cfg.delta))
        name = "pls"
    else:
        holds, margin = bound_assumption(problem.basis, problem.model, cfg.delta)
        name = "E.1"
    _print_json({"assumption": name, "delta_event": event_delta(cfg.delta), "holds": holds, "margin": margin})
    return EXIT_OK if holds else EXIT_ASSUMPTION


def _simulate(cfg: ExperimentConfig, args: argparse.Namespace) -> dict:
    summary, records = run_experiment(cfg)
    print(f"wall time {summary.wall_time_s:.2f}s", file=sys.stderr)
    if args.out:
        for path in write_reports(args.out, summary, records, args.format):
            print(f"wrote {path}", file=sys.stderr)
    return summary.to_dict()


def cmd_simulate(args: argparse.Namespace) -> int:
    out = _simulate(_config(args), args)
    out.pop("config")
    _print_json(out)
    return EXIT_OK


def cmd_properties(args: argparse.Namespace) -> int:
    results = run_suites(args.seed or 0, args.suite)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite}.{r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def cmd_pls_demo(args: argparse.Namespace) -> int:
    if args.config:
        cfg = _config(args)
    else:
        cfg = ExperimentConfig.from_dict(DEFAULT_PLS_CONFIG).with_overrides(seed=args.seed, trials=args.trials)
    if not cfg.is_pls:
        raise InvalidInputError("pls-demo needs a config with scenario 'pls'")
    out = _simulate(cfg, args)
    inst = build_problem(cfg).pls_instance
    rng = np.random.default_rng(cfg.seed)
    angles = []
    for _ in range(5):
        Y = inst.X @ inst.beta + np.sqrt(max(inst.tau2, 1e-4)) * rng.standard_normal(inst.n)
        G_hat = krylov_matrix(inst.Sigma, inst.X.T @ Y / inst.n, cfg.K)
        angles.append(float(principal_angles(nipals_weights(inst.X, Y, cfg.K), G_hat).max()))
    out["helland_max_angle"] = max(angles)
    out["helland_ok"] = max(angles) < 1e-6
    out.pop("config")
    _print_json(out)
    return EXIT_OK if out["helland_ok"] else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subspace-bounds", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every assembled constant")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--trials", type=int, help="override the number of trials")

    p = sub.add_parser("bound", help="print the bound for a config without sampling")
    common(p)
    p.set_defaults(func=cmd_bound)
    p = sub.add_parser("check", help="report the well-conditioning assumption verdict")
    common(p)
    p.set_defaults(func=cmd_check)
    for name, func, needs in (("simulate", cmd_simulate, True), ("pls-demo", cmd_pls_demo, False)):
        p = sub.add_parser(name, help="run seeded Monte Carlo trials" if needs else "end-to-end PLS experiment")
        common(p, needs)
        p.add_argument("--out", help="directory for summary.json and trials.csv/json")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.set_defaults(func=func)
    p = sub.add_parser("properties", help="run the invariant suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="restrict to a suite (repeatable)")
    p.set_defaults(func=cmd_properties)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except AssumptionViolatedError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (InvalidInputError, InvalidParameterError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, RankDeficiencyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
