"""Command-line entry point: ``aces run | oracle | plot``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ..environment import CONTEXT_BOUNDS, optimal_reward
from .config import config_from_dict, ensure_writable, load_config_file
from .experiment import run_experiment
from .plotting import plot_learning_curves, result_dirs

# flag dest -> config key
_RUN_FLAGS = {
    "strategy": "strategy", "nnn": "n_nn", "episodes": "episodes", "runs": "runs",
    "seed": "seed", "eval_interval": "eval_interval", "noise_std": "noise_std",
    "out": "output_dir", "jobs": "jobs", "aces_evaluations": "aces_evaluations",
    "es_evaluations": "es_evaluations",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aces", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a strategy over seeded episodes")
    run.add_argument("--strategy", choices=["random", "ucb", "es", "aces"])
    run.add_argument("--nnn", type=int, help="nearest pool contexts summed by ACES")
    run.add_argument("--episodes", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--eval-interval", type=int)
    run.add_argument("--noise-std", type=float)
    run.add_argument("--out")
    run.add_argument("--config", help="flat key = value file; flags override it")
    run.add_argument("--jobs", type=int, help="runs executed in parallel processes")
    run.add_argument("--aces-evaluations", type=int, help="CMA-ES budget per ACES episode")
    run.add_argument("--es-evaluations", type=int, help="CMA-ES budget per ES episode")
    run.add_argument("--no-plots", action="store_true")

    oracle = sub.add_parser("oracle", help="tabulate optimal rewards over the context box")
    oracle.add_argument("--grid", type=int, default=16)
    oracle.add_argument("--out", required=True)

    plot = sub.add_parser("plot", help="overlay learning curves of result directories")
    plot.add_argument("--in", dest="inp", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--metric", choices=["mean", "mean_regret"], default="mean")
    return parser


def cmd_run(args) -> int:
    values = load_config_file(args.config) if args.config else {}
    for dest, key in _RUN_FLAGS.items():
        value = getattr(args, dest)
        if value is not None:
            values[key] = value
    if args.no_plots:
        values["plots"] = False
    config = config_from_dict(values)
    ensure_writable(config.output_dir)
    results = run_experiment(config)
    print(f"{config.label}: {len(results)} runs written to {config.output_dir}")
    return 0


def cmd_oracle(args) -> int:
    n = args.grid
    xs = np.linspace(CONTEXT_BOUNDS.lower[0], CONTEXT_BOUNDS.upper[0], n)
    ys = np.linspace(CONTEXT_BOUNDS.lower[1], CONTEXT_BOUNDS.upper[1], n)
    out = Path(args.out)
    if out.parent != Path(""):
        ensure_writable(out.parent)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        fh.write("# aces-result v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s_x", "s_y", "r_opt", "tau_opt", "g0_opt"])
        for x in xs:
            for y in ys:
                r, theta = optimal_reward([x, y])
                w.writerow([repr(float(x)), repr(float(y)), repr(float(r)),
                            repr(float(theta[0])), repr(float(theta[1]))])
    return 0


def cmd_plot(args) -> int:
    plot_learning_curves(result_dirs(args.inp), args.out, metric=args.metric)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "oracle": cmd_oracle, "plot": cmd_plot}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
