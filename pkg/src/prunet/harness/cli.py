"""Command-line entry point.

Subcommands: run, sweep, timing, export, gradcheck, lemma1. Exit codes
distinguish failure causes: 0 success (and all checks passing), 2 config
error, 3 data error, 4 numeric failure (including failed verification).
"""

from __future__ import annotations

import argparse
import sys

from .. import verification
from ..errors import ConfigError, DataError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prunet",
        description="Recurrent-cell benchmarks: train, sweep, and report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--workers", type=int, default=1,
                       help="parallel restart workers (1 = bit-reproducible)")
    run_p.add_argument("--out", default=".", help="results directory")

    sweep_p = sub.add_parser("sweep", help="run a sweep config (list-valued fields)")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--workers", type=int, default=1)
    sweep_p.add_argument("--out", default=".", help="results directory")

    timing_p = sub.add_parser("timing", help="per-epoch timing table for a results dir")
    timing_p.add_argument("results_dir")

    export_p = sub.add_parser("export", help="write figure CSVs (and PNGs) from results")
    export_p.add_argument("results_dir")
    export_p.add_argument("--figure", required=True, choices=("sweep", "curves"))
    export_p.add_argument("--normalize-delta2", action="store_true",
                          help="divide MSE columns by the task noise variance")
    export_p.add_argument("--no-render", action="store_true",
                          help="write CSVs only, skip PNG rendering")
    export_p.add_argument("--out", default=None,
                          help="output directory (default: results dir)")

    grad_p = sub.add_parser("gradcheck", help="finite-difference check of every "
                                              "cell/loss/depth combination")
    grad_p.add_argument("--points", type=int, default=20)
    grad_p.add_argument("--seed", type=int, default=20240)

    lemma_p = sub.add_parser("lemma1", help="type-I to type-II conversion "
                                            "equivalence suite")
    lemma_p.add_argument("--systems", type=int, default=50)
    lemma_p.add_argument("--trials", type=int, default=100)
    lemma_p.add_argument("--seed", type=int, default=31337)

    return parser


def _cmd_run(args) -> int:
    from .runner import run_experiment

    path = run_experiment(args.config, out_dir=args.out, workers=args.workers,
                          seed_override=args.seed)
    print(f"results written to {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .sweep import run_sweep

    path = run_sweep(args.config, out_dir=args.out, workers=args.workers,
                     seed_override=args.seed)
    print(f"summary written to {path}")
    return EXIT_OK


def _cmd_timing(args) -> int:
    from .reporting import timing_report

    report = timing_report(args.results_dir)
    print(report.describe())
    return EXIT_OK


def _cmd_export(args) -> int:
    from . import plots
    from .reporting import export_plotdata

    csv_paths = export_plotdata(args.results_dir, args.figure,
                                normalize_delta2=args.normalize_delta2,
                                out_dir=args.out)
    for p in csv_paths:
        print(f"wrote {p}")
    if not args.no_render:
        for p in plots.render_all(csv_paths, args.figure):
            print(f"wrote {p}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    results = verification.run_gradcheck(points=args.points, seed=args.seed)
    if all(r.passed for r in results):
        print("gradcheck: all combinations pass")
        return EXIT_OK
    print("gradcheck: FAILURES present")
    return EXIT_NUMERIC


def _cmd_lemma1(args) -> int:
    results = verification.run_lemma1(n_systems=args.systems, trials=args.trials,
                                      seed=args.seed)
    if all(ok for _, ok, _, _ in results):
        print("lemma1: all converted systems equivalent")
        return EXIT_OK
    print("lemma1: FAILURES present")
    return EXIT_NUMERIC


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "timing": _cmd_timing,
    "export": _cmd_export,
    "gradcheck": _cmd_gradcheck,
    "lemma1": _cmd_lemma1,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
