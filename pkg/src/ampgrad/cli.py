"""Command-line entry point: ``ampgrad run | sweep | plot``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError
from .experiment.config import config_from_dict, read_raw_config
from .experiment.plots import MissingRunsError, emit_plot_data
from .experiment.runner import plan_jobs, run


def _finish_config(raw: dict, path: str, args):
    if args.output_dir:
        raw["output_dir"] = os.path.abspath(args.output_dir)
    if args.workers:
        raw["workers"] = args.workers
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def _print_plan(config) -> None:
    points, jobs = plan_jobs(config)
    for label, (sched, seeds) in points.items():
        print(f"{label}\t{sched.to_text()}\tseeds={list(seeds)}")
    print(f"{len(jobs)} runs")


def cmd_run(args) -> int:
    return _run_raw(read_raw_config(args.config), args)


def _parse_grid(values):
    if not values:
        return None
    if len(values) == 1 and values[0] in ("coarse", "fine", "grid"):
        return values[0]
    return [float(v) for v in values]


def cmd_sweep(args) -> int:
    raw = read_raw_config(args.config)
    raw.pop("schedules", None)
    raw.pop("sweep", None)
    spec = {"grid": _parse_grid(args.grid)}
    if args.base:
        spec["base"] = args.base
    if args.gamma is not None:
        spec["gamma"] = args.gamma
    if args.mode == "step1":
        raw["sweep"] = {"step1_ratio": spec}
    elif args.mode == "step2":
        if not args.mm:
            raise ConfigError("--mode step2 needs --mm")
        spec["mm"] = args.mm
        raw["sweep"] = {"step2_ratio": spec}
    else:
        if not args.schedule:
            raise ConfigError("--mode gamma needs --schedule")
        spec = {"schedule": args.schedule, "grid": _parse_grid(args.grid) or "coarse"}
        raw["sweep"] = {"gamma": spec}
    return _run_raw(raw, args)


def _run_raw(raw: dict, args) -> int:
    config = _finish_config(raw, args.config, args)
    if args.dry_run:
        _print_plan(config)
        return 0
    code = run(config)
    print(os.path.join(config.output_dir, "summary.json"))
    return code


def cmd_plot(args) -> int:
    try:
        paths = emit_plot_data(args.summary, args.out)
    except MissingRunsError as exc:
        print(f"ampgrad plot: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ampgrad",
                                     description="Training with per-layer gradient amplification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--output-dir", help="override output_dir from the config")
        p.add_argument("--workers", type=int, help="parallel runs (capped by $AMPGRAD_THREADS)")
        p.add_argument("--dry-run", action="store_true", help="print the planned runs and exit")

    p = sub.add_parser("run", help="run the schedules or sweep in a config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a ratio or factor sweep on top of a config")
    common(p)
    p.add_argument("--mode", required=True, choices=("step1", "step2", "gamma"))
    p.add_argument("--mm", type=float, nargs="+", help="phase-2 ratios for step2")
    p.add_argument("--schedule", help="schedule label or phase list for the gamma sweep")
    p.add_argument("--grid", nargs="+", help="'coarse', 'fine' or explicit values")
    p.add_argument("--gamma", type=float, help="factor for ratio sweeps (default 2)")
    p.add_argument("--base", help="base schedule whose epochs and learning rates are reused")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="write plot data from a summary.json")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", help="output directory (default: next to the summary)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"ampgrad: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
