"""Command line entry point ``divesim``.

Exit status: 0 on success, 2 when ``--check`` is given and an acceptance
check fails, 1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import harness
from .errors import DivesimError

log = logging.getLogger("divesim")


def build_parser():
    parser = argparse.ArgumentParser(prog="divesim",
                                     description="Dot-continuum adiabatic evolution scenarios.")
    parser.add_argument("scenario", choices=harness.SCENARIOS)
    parser.add_argument("--config", required=True, help="TOML scenario file")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    parser.add_argument("--check", action="store_true",
                        help="exit with status 2 if an acceptance check fails")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = harness.load_config(args.config, args.scenario)
        if args.workers is not None:
            if args.workers < 1:
                raise harness.ConfigError("--workers must be >= 1")
            cfg = dataclasses.replace(cfg, workers=args.workers)
        record = harness.run_scenario(cfg)
        paths = harness.write_outputs(record, cfg, args.out)
    except DivesimError as exc:
        print(f"divesim: error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        log.info("wrote %s", p)
    for name, chk in record.checks.items():
        print(f"{'PASS' if chk['passed'] else 'FAIL'} {name}: {chk['value']}")
    for row in record.failed:
        print(f"FAILED ROW {row}", file=sys.stderr)
    if args.check and not record.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
