#!/usr/bin/env python3
"""Regenerate the bundled synthetic price panel (data/fixture_prices.csv).

The panel is a small deterministic stand-in for a real consumer-price
index table: eight monthly price series driven by a network model, one
annual-only series (excluded on ingest), and one late-starting series
(dropped by data.earliest).  Committing the CSV keeps tests and example
runs byte-stable; rerun this script only if the generator changes.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ragnar.synthetic import make_fixture_frame


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/fixture_prices.csv")
    parser.add_argument("--seed", type=int, default=20)
    parser.add_argument("--months", type=int, default=192)
    args = parser.parse_args()
    frame = make_fixture_frame(n_price_months=args.months, seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    frame.to_csv(args.out, index=False)
    print(f"wrote {len(frame)} rows ({frame.series_id.nunique()} series) to {args.out}")


if __name__ == "__main__":
    main()
