#!/usr/bin/env python3
"""Run the complete forecasting protocol (configs/full.ini) on real data.

Expects a long-format CSV of monthly price-index levels with columns
series_id,date,value containing a CPI series, covering the mid-1990s
onwards so that 150 training months and 30 ranking months precede the
first forecast origin.  The full 10000-graph ensemble takes a few hours
on one core; pass --threads to parallelise and --graphs to scale down.

    python3 scripts/run_full_protocol.py --data cpi_levels.csv --out runs/full
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ragnar.cli import main as cli_main

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "full.ini")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True, help="price-level panel CSV")
    parser.add_argument("--out", default="runs/full", help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--graphs", type=int, default=None, help="override ensemble size")
    parser.add_argument("--seed-list", default=None, help="comma-separated ensemble seeds")
    parser.add_argument("--resume", action="store_true", help="continue from a checkpoint")
    args = parser.parse_args()

    if args.graphs is not None:
        os.environ["RAGNAR_GRAPHS_COUNT"] = str(args.graphs)
    argv = [
        "--config", CONFIG,
        "--out", args.out,
        "--threads", str(args.threads),
        "--verbose",
        "run",
        "--data", args.data,
    ]
    if args.seed_list:
        argv += ["--seed-list", args.seed_list]
    if args.resume:
        argv.append("--resume")
    return cli_main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
