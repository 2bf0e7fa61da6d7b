#!/usr/bin/env python3
"""Desk-scale check: 1000-graph ensemble vs the averaged-AR benchmark.

Runs the fully per-node parameter class averaged over orders {2,13,25}
and stage menus {1},{2},{1,2} against AvAR on the same data, backtesting
monthly origins from 2010, and prints per-horizon RMSE ratios.  On real
consumer-price data the ensemble should come in well under 1.0 at the
longer horizons; expect under thirty minutes on a few cores.

    python3 scripts/run_desk_scale.py --data cpi_levels.csv --out runs/desk
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import pandas as pd

from ragnar.evaluation import horizon_table
from ragnar.panel import drop_short_series, load_panel, yoy_transform
from ragnar.selection import BacktestConfig, run_backtest

ENSEMBLE = "local_alpha_beta_avgnar_p2_s3"
BENCHMARK = "avar_p2"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True, help="price-level panel CSV")
    parser.add_argument("--out", default="runs/desk", help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--graphs", type=int, default=1000)
    parser.add_argument("--first-origin", default="2010-01")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    config = BacktestConfig(
        g_graphs=args.graphs,
        edge_prob=0.03,
        top_n=5,
        candidate_orders=(2, 13, 25),
        candidate_stages=(1, 2),
        order_sets=(("p2", (2, 13, 25)),),
        stage_sets=(("s3", (1, 2)),),
        param_classes=("local_alpha_beta",),
        labels=("rw1", BENCHMARK, ENSEMBLE),
        first_origin=args.first_origin,
        seed=args.seed,
    )
    panel = yoy_transform(load_panel(args.data))
    needed_start = pd.Period(args.first_origin, freq="M") - (config.n_train + config.n_val - 1)
    panel = drop_short_series(panel, str(needed_start))
    print(f"panel: {panel.n_series} series {panel.dates[0]}..{panel.dates[-1]}")

    start = time.perf_counter()
    result = run_backtest(panel, config, workers=args.threads,
                          checkpoint_dir=os.path.join(args.out, "checkpoint"))
    elapsed = time.perf_counter() - start
    result.save(args.out)
    print(f"{len(result.origins)} origins in {elapsed:.0f}s with {args.threads} threads")

    table = horizon_table(result.forecasts, panel, benchmark=BENCHMARK)
    view = table[table.label == ENSEMBLE].set_index("horizon")
    print(f"\n{ENSEMBLE} vs {BENCHMARK}:")
    for h in (1, 3, 6, 9, 12):
        print(f"  h={h:>2}: rmse {view.rmse[h]:.3f}  relative {view.rmse_rel[h]:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
