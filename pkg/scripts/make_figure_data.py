"""Regenerate every figure dataset as CSV (plus plotting scripts) under one directory.

    python3 scripts/make_figure_data.py [outdir] [--full]

--full extends the crossing window sweep to tau = 1e6 (about two minutes).

Each dataset is one CLI invocation, so the commands printed here can be
rerun individually.
"""

import argparse
import sys
import time
from pathlib import Path

from exotic_holonomy.cli import main

DATASETS = {
    "two_level_spectrum": ["eigs", "--family", "two-level", "--v", "0.5773502691896258"],
    "two_level_gauge_field": ["holonomy", "--family", "two-level"],
    "two_level_map_strong": ["map", "--family", "two-level", "--v", "2"],
    "two_level_map_weak": ["map", "--family", "two-level", "--v", "0.5"],
    "three_level_spectrum": ["eigs", "--family", "three-level", "--v", "1"],
    "three_level_gauge_field": ["holonomy", "--family", "three-level"],
    "three_level_map": ["map", "--family", "three-level", "--v", "1"],
    "sigma_flows": ["flows"],
    "crossing_window": ["dynamics", "--family", "two-level", "--eps", "0.012926", "--tau", "10,50,1000,1e5"],
}


def run(outdir: Path) -> int:
    worst = 0
    for name, argv in DATASETS.items():
        args = [*argv, "--out", str(outdir / name), "--plot-script"]
        print(f"$ exotic-holonomy {' '.join(args)}", flush=True)
        t0 = time.perf_counter()
        code = main(args)
        print(f"  -> exit {code} in {time.perf_counter() - t0:.1f} s\n", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="figure_data")
    ap.add_argument("--full", action="store_true")
    opts = ap.parse_args()
    if opts.full:
        DATASETS["crossing_window"][-1] = "10,50,1000,1e6"
    sys.exit(run(Path(opts.outdir)))
