"""Command-line interface.

Subcommands mirror the experiments plus a convergence-order fit over an
existing results file:

    bdbench ou-verify       --scale desk --seed 7 --out out/
    bdbench longtime-1d     --scale desk --out out/
    bdbench finite-time-1d  --scale desk --out out/
    bdbench lj-rdf          --scale desk --out out/
    bdbench fit-order out/results.csv --scheme lm --metric l2
"""

import argparse
import csv
import sys

from . import __version__
from .backend import BACKEND
from .errors import BdbenchError
from .harness import default_workers, load_config, run_experiment
from .stats import fit_order


def _add_run_parser(sub, name: str, help_text: str):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", default=None, help="user config file overriding the scale defaults")
    p.add_argument("--scale", default="desk", choices=["desk", "paper"], help="experiment size")
    p.add_argument("--seed", type=int, default=0, help="64-bit stream seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="parallel workers (no effect on results)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdbench",
        description="Brownian dynamics weak-convergence benchmarks (backend: %s)" % BACKEND,
    )
    parser.add_argument("--version", action="version", version=f"bdbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub, "ou-verify", "Ornstein-Uhlenbeck moment verification")
    _add_run_parser(sub, "longtime-1d", "long-time cosine distribution error vs stepsize")
    _add_run_parser(sub, "finite-time-1d", "finite-time evolving-distribution error")
    _add_run_parser(sub, "lj-rdf", "Lennard-Jones radial distribution error")

    f = sub.add_parser("fit-order", help="log-log order fit over rows of a results CSV")
    f.add_argument("results", help="results.csv produced by an experiment run")
    f.add_argument("--scheme", required=True, help="scheme to filter (em, lm, heun)")
    f.add_argument("--metric", default="l2", help="metric column to fit (default l2)")
    f.add_argument("--time", type=float, default=None, help="restrict to rows at this time")
    return parser


def _cmd_fit_order(args) -> int:
    points = []
    with open(args.results) as fh:
        for row in csv.DictReader(fh):
            if row["scheme"] != args.scheme or row["metric"] != args.metric or not row["h"]:
                continue
            if args.time is not None and (not row["time"] or float(row["time"]) != args.time):
                continue
            points.append((float(row["h"]), float(row["value"])))
    if len(points) < 3:
        print("need at least three (h, error) rows to fit", file=sys.stderr)
        return 1
    fit = fit_order(points)
    print(f"points: {len(points)}")
    print(f"slope: {fit.fitted_slope:.6f} +- {fit.slope_stderr:.6f}")
    print(f"intercept: {fit.fitted_intercept:.6f}  r_squared: {fit.r_squared:.6f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fit-order":
        return _cmd_fit_order(args)
    try:
        cfg = load_config(args.command, scale=args.scale, seed=args.seed, config_path=args.config)
        workers = args.workers if args.workers is not None else default_workers()
        rows = run_experiment(cfg, args.out, workers)
    except BdbenchError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"{args.command}: wrote {len(rows)} result rows to {args.out}/results.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
