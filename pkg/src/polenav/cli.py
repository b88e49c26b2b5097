"""``polenav`` command-line driver.

Exit codes: 0 success, 2 configuration error (including worlds too
degenerate to calibrate on), 3 missing artifact, 4 malformed data file,
1 any other library error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

from . import experiment
from .config import load_config, with_overrides
from .errors import CalibrationError, ConfigError, EmptySubsetError, FormatError, MissingArtifactError, PolenavError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4

COMMANDS = ("gen", "build", "train", "eval", "plot")


def build_parser():
    parser = argparse.ArgumentParser(prog="polenav", description="Active cross-domain self-localization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "plot", help="experiment JSON config")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--seed", type=int, help="override the root seed (unsigned 64-bit)")
        p.add_argument("--policies", help="comma-separated policy names")
        if name == "plot":
            p.add_argument("--report", help="report CSV (default: <output_dir>/report.csv)")
            p.add_argument("--figure", help="figure path (default: next to the report)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run(args):
    if args.command == "plot":
        report = args.report
        if report is None:
            if args.config is None:
                raise ConfigError("plot needs --report or --config", "report")
            cfg = with_overrides(load_config(args.config), args.out, args.seed, args.policies)
            report = os.path.join(cfg.output_dir, experiment.REPORT)
        path = experiment.cmd_plot(report, args.figure)
        print(f"wrote {path}")
        return
    cfg = with_overrides(load_config(args.config), args.out, args.seed, args.policies)
    stage = getattr(experiment, f"cmd_{args.command}")
    stage(cfg)
    print(f"{args.command}: artifacts in {cfg.output_dir}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("default")
    try:
        _run(args)
    except (ConfigError, EmptySubsetError, CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except PolenavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
