"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 input failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .harness import MUTATIONS, oracle_suite, run_sweep
from .iteration import DivergenceError
from .limit_solver import solve_limit
from .scenario import ScenarioError, load_scenario
from .thin_solver import solve_thin

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("thinlimit")


class InputError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def report_path(out: Path) -> Path:
    return out.with_name(out.stem + ".report.json")


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _divergence_report(exc: DivergenceError) -> dict:
    return {"iterations": exc.iteration, "converged": False, "error": str(exc)}


def cmd_solve_thin(args) -> int:
    scenario = load_scenario(args.config)
    scn = scenario.thin_scenario()
    out = Path(args.out)
    try:
        u, report = solve_thin(scn, scenario.params)
    except DivergenceError as exc:
        write_json(report_path(out), _divergence_report(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    X, S = scn.grid.mesh()
    Y = scn.thin.physical_y(X, S)
    write_csv(out, ["x", "y", "u"], zip(X.reshape(-1), Y.reshape(-1), u.flat))
    write_json(report_path(out), report.to_dict())
    return EXIT_OK if report.converged else EXIT_NUMERICAL


def cmd_solve_limit(args) -> int:
    scenario = load_scenario(args.config)
    scn = scenario.limit_scenario()
    out = Path(args.out)
    try:
        w, report = solve_limit(scn, scenario.params)
    except DivergenceError as exc:
        write_json(report_path(out), _divergence_report(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_csv(out, ["x", "w"], zip(scn.x, w))
    write_json(report_path(out), report.to_dict())
    return EXIT_OK if report.converged else EXIT_NUMERICAL


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.config)
    if scenario.epsilons is None:
        raise ScenarioError("epsilons", "missing required key")
    result = run_sweep(scenario.template(), scenario.epsilons, scenario.nx, jobs=args.jobs)
    out = Path(args.out)
    rows = (
        (r.epsilon, r.nx, r.ns, r.sup_error, r.thin_report.iterations, r.limit_report.iterations, r.converged)
        for r in result.records
    )
    write_csv(out, ["epsilon", "nx", "ns", "sup_error", "thin_iters", "limit_iters", "converged"], rows)
    report_path(out).write_text(result.to_json() + "\n", encoding="utf-8")
    return EXIT_OK if result.all_converged else EXIT_NUMERICAL


def cmd_validate(args) -> int:
    report = oracle_suite(tol=args.tol, mutate=args.mutate)
    print(report.table())
    if args.out:
        write_json(Path(args.out), report.to_dict())
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinlimit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (
        ("solve-thin", cmd_solve_thin, "solve the thin-domain problem for one epsilon"),
        ("solve-limit", cmd_solve_limit, "solve the 1D limit problem"),
        ("sweep", cmd_sweep, "epsilon sweep against the limit solution"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output CSV path; a .report.json is written next to it")
        if name == "sweep":
            p.add_argument("--jobs", type=_positive_int, default=1, help="parallel thin solves")
        p.set_defaults(func=fn)

    p = sub.add_parser("validate", help="run the built-in oracle suite")
    p.add_argument("--mutate", choices=MUTATIONS, help="inject a known defect (test hook)")
    p.add_argument("--tol", type=_positive_float, help="override the solver tolerance")
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_validate)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("THINLIMIT_LOG", "quiet")
    if level_name not in LOG_LEVELS:
        raise InputError(f"THINLIMIT_LOG must be one of {', '.join(LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(level=LOG_LEVELS[level_name], format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        _configure_logging()
        return args.func(args)
    except (ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # keep the exit-code contract for unexpected failures
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
