"""Command line entry point: ``almgp run|aggregate|plot|oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .benchmarks import (eval_borehole, eval_sphere3d, eval_synthetic2d, eval_trig1d,
                         get_problem)
from .harness import ExperimentConfig, aggregate_dir, plot_dir, run_experiment

_ORACLE_ARITY = {"trig1d": 1, "synthetic2d": 2, "sphere3d": 2, "borehole8d": 8}


class UsageError(Exception):
    """Invalid command line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _report(exc: Exception):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def _oracle(problem: str, point: list[float]) -> dict:
    get_problem(problem)
    if len(point) != _ORACLE_ARITY[problem]:
        raise ValueError(f"{problem} takes {_ORACLE_ARITY[problem]} coordinates, "
                         f"got {len(point)}")
    if problem == "trig1d":
        return {"value": eval_trig1d(point[0])}
    if problem == "synthetic2d":
        return {"value": eval_synthetic2d(*point)}
    if problem == "sphere3d":
        x, y, z, value = eval_sphere3d(*point)
        return {"x": x, "y": y, "z": z, "value": value}
    return {"value": eval_borehole(np.array(point))}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(doc: dict, pairs: list[str]) -> dict:
    for pair in pairs:
        key, _, value = pair.partition("=")
        if not _:
            raise ValueError(f"override {pair!r} is not key=value")
        target = doc
        *path, last = key.split(".")
        for part in path:
            target = target.setdefault(part, {})
        target[last] = _parse_value(value)
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="almgp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--output", help="output directory")
    run.add_argument("--repetitions", type=int)
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--strategies", help="comma separated, e.g. alc,random")
    run.add_argument("--workers", type=int)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config entry, e.g. al.N_max=5 (repeatable)")

    agg = sub.add_parser("aggregate", help="recompute aggregate.csv from records.csv")
    agg.add_argument("directory")

    plot = sub.add_parser("plot", help="re-emit rmse_curve.svg from aggregate.csv")
    plot.add_argument("directory")

    orc = sub.add_parser("oracle", help="evaluate a benchmark function")
    orc.add_argument("problem", choices=sorted(_ORACLE_ARITY))
    orc.add_argument("point", nargs="+", type=float)
    return parser


def main(argv=None) -> int:
    """Run the command line; returns 0 on success, 1 on failure, 2 on bad usage."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _report(exc)
        return 2
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            with open(args.config) as fh:
                doc = json.load(fh)
            doc = _apply_overrides(doc, args.set)
            if args.output:
                doc["output_dir"] = args.output
            if args.repetitions is not None:
                doc["repetitions"] = args.repetitions
            if args.seed is not None:
                doc["base_seed"] = args.seed
            if args.strategies:
                doc["strategies"] = args.strategies.split(",")
            if args.workers is not None:
                doc["workers"] = args.workers
            out = run_experiment(ExperimentConfig.from_dict(doc))
            print(out)
        elif args.command == "aggregate":
            print(aggregate_dir(args.directory))
        elif args.command == "plot":
            print(plot_dir(args.directory))
        else:
            print(json.dumps(_oracle(args.problem, args.point)))
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        _report(exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
