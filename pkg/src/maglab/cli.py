"""Command line entry point.

    maglab <experiment> --config <file.json> --out <dir> [--threads n] [--verbose]

Exit codes: 0 all verdicts pass, 1 any criterion failed, 2 invalid run
(guards tripped, iteration stalled), 3 configuration error.  The environment
variable MAGLAB_THREADS overrides --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import EXPERIMENTS, ExperimentConfig
from .errors import (
    ConfigError,
    InvalidRun,
    MaglabError,
    NoConvergence,
    ResolutionTooCoarse,
    UnresolvedState,
)
from .grid import set_fft_workers
from .harness import RUNNERS, emit_report

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INVALID = 2
EXIT_CONFIG = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maglab",
        description="Magnetic Schrodinger operator laboratory: run one experiment "
                    "from a JSON config and write CSV/JSON reports.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", required=True, help="output directory for reports")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sweep points and FFTs")
    parser.add_argument("--verbose", action="store_true", help="per-row progress on stdout")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = args.threads
    env_threads = os.environ.get("MAGLAB_THREADS")
    if env_threads is not None:
        try:
            threads = int(env_threads)
        except ValueError:
            print(f"maglab: MAGLAB_THREADS={env_threads!r} is not an integer",
                  file=sys.stderr)
            return EXIT_CONFIG
    threads = max(1, threads)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        cfg = ExperimentConfig.from_dict(doc)
        if cfg.experiment != args.experiment:
            raise ConfigError(
                f"config is for experiment {cfg.experiment!r}, not {args.experiment!r}"
            )
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"maglab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    set_fft_workers(threads)
    try:
        result = RUNNERS[cfg.experiment](cfg, threads=threads, verbose=args.verbose)
    except ConfigError as exc:
        print(f"maglab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidRun, UnresolvedState, NoConvergence, ResolutionTooCoarse) as exc:
        print(f"maglab: invalid run: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MaglabError as exc:
        print(f"maglab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    csv_path, json_path = emit_report(result, args.out)
    for c in result.criteria:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"[{status}] {c['name']}: value={c['value']} {c['comparator']} "
              f"threshold={c['threshold']}")
    print(f"verdict: {result.verdict}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    if result.verdict == "invalid":
        return EXIT_INVALID
    return EXIT_PASS if result.verdict == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
