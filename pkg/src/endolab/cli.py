"""Command line entry point: ``endolab <kind> --config PATH [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import sys

from .experiments import KINDS, RUNNERS, ConfigError, ExperimentConfig, preset_config
from .presets import PRESETS


def build_parser():
    parser = argparse.ArgumentParser(prog="endolab", description="Experiments on partially hyperbolic torus endomorphisms.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
    p = sub.add_parser("preset", help="print a ready config for a preset map")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--format", choices=("toml", "json"), default="toml")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.kind == "preset":
        sys.stdout.write(preset_config(args.name, args.format))
        return 0
    try:
        cfg = ExperimentConfig.load(args.config, args.seed)
        result = RUNNERS[args.kind](cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in result.files:
        print(path)
    if result.exit_code:
        print(f"quality gate failed: {result.summary}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
