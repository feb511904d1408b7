"""Command-line entry point.

    gripsim run <config.toml> [--seed N] [--trials N] [--out DIR] [--jobs N]
    gripsim reproduce singulation|insertion [--seed N] [--trials N] [--out DIR] [--jobs N]
    gripsim sweep <config.toml> [--out DIR]

Exit code 0 covers completed runs even when trials record failures
(those are data); nonzero is reserved for configuration and execution
errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .harness import reproduce, run


def _add_common(parser, jobs=True):
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--trials", type=int, default=None,
                        help="override the trial count")
    parser.add_argument("--out", default=None, help="output directory")
    if jobs:
        parser.add_argument("--jobs", type=int, default=1,
                            help="parallel trial workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gripsim",
        description="Desk-scale tactile gripper simulation suite")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config", help="path to a TOML scenario config")
    _add_common(p_run)

    p_rep = sub.add_parser("reproduce",
                           help="run a canned desk-scale experiment analogue")
    p_rep.add_argument("experiment", choices=("singulation", "insertion"))
    _add_common(p_rep)

    p_sweep = sub.add_parser("sweep", help="scooping flip-map parameter sweep")
    p_sweep.add_argument("config", help="path to a TOML scenario config")
    p_sweep.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            if args.trials is not None:
                cfg = replace(cfg, trials=args.trials)
            report = run(cfg, out_dir=args.out, jobs=args.jobs)
        elif args.command == "reproduce":
            report = reproduce(args.experiment, out_dir=args.out,
                               seed=args.seed, trials=args.trials,
                               jobs=args.jobs)
        else:  # sweep
            cfg = replace(load_config(args.config), scenario="sweep")
            report = run(cfg, out_dir=args.out)
    except ConfigError as exc:
        print(f"gripsim: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"gripsim: {exc}", file=sys.stderr)
        return 1
    for line in report.lines():
        if not line.startswith("config."):
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
