"""Command line entry points for the converters and the figure renderer."""

from __future__ import annotations

import argparse
import sys

from .era5 import IngestJob, run_jobs
from .figures import plot_report
from .ibtracs import convert_ibtracs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormtools",
        description="Dataset converters and report figure rendering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("era5", help="convert ERA5 NetCDF files to a grid directory")
    p.add_argument("sources", nargs="+", help="NetCDF source files")
    p.add_argument("--out", required=True, help="output grid directory")
    p.add_argument("--years", nargs=2, type=int, default=(1980, 2023), metavar=("FIRST", "LAST"))

    p = sub.add_parser("ibtracs", help="filter an IBTrACS CSV to a best-track file")
    p.add_argument("source", help="IBTrACS CSV")
    p.add_argument("--out", required=True, help="output best-track CSV")
    p.add_argument("--years", nargs=2, type=int, default=(1980, 2023), metavar=("FIRST", "LAST"))

    p = sub.add_parser("figures", help="render figures from a report directory")
    p.add_argument("report", help="report directory")
    p.add_argument("--out", default=None, help="figure directory (default: <report>/figures)")
    p.add_argument("--grids", default=None, help="grid directory for the map background")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "era5":
            out = run_jobs([IngestJob(tuple(args.sources), args.out, years=tuple(args.years))])[0]
            print(out)
        elif args.command == "ibtracs":
            print(convert_ibtracs(args.source, args.out, years=tuple(args.years)))
        else:
            for path in plot_report(args.report, out_dir=args.out, grids=args.grids):
                print(path)
    except (OSError, ValueError) as exc:
        print(f"stormtools: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
