"""Command line interface: ``nswrank experiment|benchmark <config>``.

Thread pinning must happen before numpy loads its BLAS backend, so this
module imports nothing heavy at the top level; the package itself also
loads its submodules lazily.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nswrank",
        description="Run fair-ranking experiments and timing benchmarks from an INI config.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("experiment", "evaluate the configured methods and write metrics.csv"),
        ("benchmark", "time the configured methods over a size grid and write timings.csv"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="path to the INI config file")
        cmd.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        cmd.add_argument("--threads", type=int, default=None, help="pin BLAS/OpenMP thread count")
        cmd.add_argument("--seed", type=int, default=None, help="base seed (overrides [experiment] base_seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads <= 0:
            print("--threads must be positive", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .core import DomainError, ShapeError, SolverError
    from .experiments import ConfigError, run_benchmark, run_experiment

    try:
        if args.command == "experiment":
            averages = run_experiment(
                args.config, out_dir=args.out, base_seed=args.seed, threads=args.threads
            )
            _print_table(averages)
        else:
            run_benchmark(args.config, out_dir=args.out, base_seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, SolverError, DomainError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _print_table(averages):
    if not averages:
        return
    columns = [c for c in averages[0] if c != "method"]
    header = "method".ljust(12) + "".join(c.rjust(18) for c in columns)
    print(header)
    for row in averages:
        cells = "".join(
            (f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])).rjust(18)
            for c in columns
        )
        print(row["method"].ljust(12) + cells)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
