"""Command-line entry point: ``sdbias <command> [--config F] [--set k=v ...] [--out D] [--seed N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..formats import FormatError
from ..modelzoo import NumericFailure
from ..numerics import NonFiniteError
from . import commands
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = {
    "gen": commands.cmd_gen,
    "train": commands.cmd_train,
    "probe": commands.cmd_probe,
    "ablate": commands.cmd_ablate,
    "shuffle-exp": commands.cmd_shuffle_exp,
    "dose-response": commands.cmd_dose_response,
    "report": commands.cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdbias", description="Static/dynamic bias probing on synthetic video.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key by dotted path (repeatable)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config, args.set, args.seed, args.out)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"sdbias: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, NonFiniteError, FloatingPointError) as exc:
        print(f"sdbias: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"sdbias: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
