"""Command-line entry point: ``jcrwave <verb> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import config_lines, load_config
from .errors import ConfigError, JcrError
from .experiments import RUNNERS, validate
from .tables import UNIT_CONVENTIONS, write_svg

VERBS = ("coarray", "tradeoff", "music-rmse", "optimize", "validate")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jcrwave",
        description="Sparse preamble waveform design for joint radar-communication links.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", type=Path, help="TOML configuration file")
    parser.add_argument("--seed", type=_u64, help="64-bit seed (default: config value, 0)")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    return parser


def header_lines(verb: str, cfg: dict) -> list[str]:
    lines = [f"jcrwave {__version__}", f"experiment = {verb}", f"seed = {cfg['seed']}"]
    lines += [f"units: {u}" for u in UNIT_CONVENTIONS]
    lines += [f"config.{line}" for line in config_lines(cfg)]
    return lines


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        if args.verb == "validate":
            print(f"error: {exc}")
            return 1
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.verb == "validate":
        problems = validate(cfg)
        for p in problems:
            print(p)
        if not problems:
            print("ok: no problems found")
        return 1 if any(p.level == "error" for p in problems) else 0

    errors = [p for p in validate(cfg) if p.level == "error"]
    if errors:
        for p in errors:
            print(p, file=sys.stderr)
        return 2
    try:
        result = RUNNERS[args.verb](cfg, threads=args.threads)
    except JcrError as exc:
        print(f"{args.verb} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    header = header_lines(args.verb, cfg)
    for table in result.tables:
        path = table.write(args.out, header)
        print(path)
    if args.svg:
        for name, plot in result.plots.items():
            path = write_svg(args.out / f"{name}.svg", plot["series"], plot["xlabel"], plot["ylabel"])
            print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
