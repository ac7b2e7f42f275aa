#!/usr/bin/env python3
"""Rank all 162 stencil launch configurations and print the extremes.

Writes the full ranking CSV next to this script unless --out is given.
Pass --full-sampling to use the default (heavier) sampling knobs.
"""

import argparse
import sys
from pathlib import Path

from gvo import api
from gvo.report import render_ranking_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).parent / "stencil_ranking.csv"))
    parser.add_argument("--machine", default="v100")
    parser.add_argument("--full-sampling", action="store_true")
    args = parser.parse_args()

    knobs = {} if args.full_sampling else {"wave_samples": 1, "block_samples": 2}
    rows = api.run_sweep(
        "builtin:stencil",
        args.machine,
        1024,
        folding_variants=True,
        **knobs,
    )
    Path(args.out).write_text(render_ranking_csv(rows), encoding="utf-8")
    print(f"wrote {len(rows)} rows to {args.out}")
    print("\nbest five:")
    for row in rows[:5]:
        p = row.prediction
        print(f"  {row.config.key:16} {p.glups:6.2f} GLup/s  limiter={p.limiter}")
    print("worst five:")
    for row in rows[-5:]:
        p = row.prediction
        print(f"  {row.config.key:16} {p.glups:6.2f} GLup/s  limiter={p.limiter}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
