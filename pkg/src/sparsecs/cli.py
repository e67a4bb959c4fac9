"""Command-line entry point.

``sparsecs solve`` runs one method on one instance file and prints a JSON
record; ``sparsecs sweep`` drives the synthetic benchmark grid and writes
the result CSV.  Exit codes: 0 success, 1 usage or data error, 2 infeasible
instance.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time

import numpy as np

from . import bnb, experiments, heuristics, relaxations, sos
from .core import (
    InfeasibleInstance,
    NoFeasibleCompletion,
    SparseCSError,
    load_instance,
    objective,
    residual_sq,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")
_DURATION_UNIT = {"ms": 1e-3, "s": 1.0, "m": 60.0, "h": 3600.0, None: 1.0}


def parse_duration(text: str) -> float:
    """Parse "600s", "10m", "1.5h", "250ms" or bare seconds."""
    m = _DURATION_RE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"cannot parse duration {text!r}")
    return float(m.group(1)) * _DURATION_UNIT[m.group(2)]


def _emit(record: dict) -> None:
    print(json.dumps(record))


def cmd_solve(args) -> int:
    try:
        instance = load_instance(args.instance)
    except FileNotFoundError:
        print(f"error: instance file not found: {args.instance}", file=sys.stderr)
        return EXIT_ERROR
    except (SparseCSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: bad instance file: {exc}", file=sys.stderr)
        return EXIT_ERROR

    record = {
        "schema_version": SCHEMA_VERSION,
        "method": args.method,
        "sparsity": None,
        "objective": None,
        "residual_sq": None,
        "runtime_ms": None,
        "status": None,
    }
    t0 = time.monotonic()
    try:
        if args.method == "bnb":
            config = bnb.BnBConfig(
                delta=args.delta,
                time_limit=args.time_limit,
                strict_bounds=args.strict_bounds,
                log_every=args.log_every,
            )
            res = bnb.solve(instance, config)
            record["status"] = res.status
            if res.status == bnb.BnBStatus.INFEASIBLE:
                record["runtime_ms"] = round((time.monotonic() - t0) * 1e3, 3)
                _emit(record)
                return EXIT_INFEASIBLE
            x = res.x_best
            record["lower_bound"] = res.lower
            record["gap"] = res.gap
        elif args.method in ("omp", "bpd", "irwl1"):
            if args.method == "omp":
                x = heuristics.omp(instance).x
            elif args.method == "bpd":
                x = relaxations.solve_bpd(instance, args.time_limit).x
            else:
                x = heuristics.irwl1(instance).x
            record["status"] = "Optimal-heuristic"
        elif args.method == "soc-bound":
            sol = relaxations.solve_perspective_relaxation(instance, args.time_limit)
            x = sol.x
            record["lower_bound"] = sol.objective
            record["status"] = sol.status.code.value
        elif args.method == "sos-bound":
            bound, cert, status = sos.solve_sos_d1(instance, args.time_limit)
            record["lower_bound"] = bound
            record["status"] = status.code.value
            record["objective"] = bound
            record["runtime_ms"] = round((time.monotonic() - t0) * 1e3, 3)
            if args.certificate_out:
                with open(args.certificate_out, "w") as fh:
                    fh.write(cert.to_json())
            _emit(record)
            return EXIT_OK
        else:  # unreachable through argparse choices
            raise ValueError(args.method)
    except (InfeasibleInstance, NoFeasibleCompletion) as exc:
        record["status"] = type(exc).__name__
        record["runtime_ms"] = round((time.monotonic() - t0) * 1e3, 3)
        _emit(record)
        return EXIT_INFEASIBLE
    except SparseCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    record["runtime_ms"] = round((time.monotonic() - t0) * 1e3, 3)
    record["sparsity"] = int(np.count_nonzero(np.abs(x) > args.support_threshold))
    if record["objective"] is None:
        record["objective"] = objective(instance, x, args.support_threshold)
    record["residual_sq"] = residual_sq(instance, x)
    _emit(record)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        grid = experiments.SweepGrid(
            n=list(cfg["n"]),
            m=list(cfg["m"]),
            k=list(cfg["k"]),
            alpha=list(cfg["alpha"]),
            gamma=list(cfg.get("gamma", [None])),
            seeds=list(cfg["seeds"]),
            sigma=float(cfg.get("sigma", 10.0)),
        )
        methods = list(cfg["methods"])
        budgets = {k: float(v) for k, v in cfg.get("time_budgets", {}).items()}
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_ERROR
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: bad sweep config: {exc}", file=sys.stderr)
        return EXIT_ERROR

    import csv

    rows = []
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=experiments.CSV_HEADER)
        writer.writeheader()
        fh.flush()

        def on_row(row):
            rows.append(row)
            writer.writerow(row)
            fh.flush()

        try:
            experiments.run_sweep(
                grid, methods, time_budgets=budgets, jobs=args.jobs, on_row=on_row
            )
        except KeyboardInterrupt:
            print("interrupted; partial results flushed", file=sys.stderr)
            return EXIT_ERROR

    for line in experiments.summarize(rows):
        print(json.dumps({"schema_version": SCHEMA_VERSION, **line}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsecs",
        description="Sparse recovery with certified optimality over a conic reformulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve one instance file")
    ps.add_argument("--instance", required=True, help="instance JSON file")
    ps.add_argument(
        "--method",
        default="bnb",
        choices=["bnb", "omp", "bpd", "irwl1", "sos-bound", "soc-bound"],
    )
    ps.add_argument("--delta", type=float, default=0.0,
                    help="relative optimality tolerance for bnb")
    ps.add_argument("--time-limit", type=parse_duration, default=None,
                    help='wall clock budget, e.g. "600s" or "10m"')
    ps.add_argument("--strict-bounds", action="store_true",
                    help="use the full perspective relaxation at every node")
    ps.add_argument("--support-threshold", type=float, default=1e-4)
    ps.add_argument("--log-every", type=int, default=0,
                    help="log search progress every N nodes")
    ps.add_argument("--certificate-out", default=None,
                    help="write the SOS certificate JSON here (sos-bound only)")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="run a synthetic benchmark sweep")
    pw.add_argument("--config", required=True, help="sweep config JSON")
    pw.add_argument("--out", required=True, help="output CSV path")
    pw.add_argument("--jobs", type=int, default=1,
                    help="parallel workers (default 1 for determinism)")
    pw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
