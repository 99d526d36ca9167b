#!/usr/bin/env python3
"""Per-step cost of the dense and the tree-structured engines on path MaxCut.

Each run starts at an exactly central point and follows the path for one
e-fold of t, so the timings isolate the cost of a step.  Prints a CSV table
and the log-log slope of time against n for each engine.
"""

import argparse
import csv
import sys

import numpy as np

from treesolve.cli import FAMILIES, SolveConfig, bench_one, parse_sizes


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--family", choices=FAMILIES, default="path")
    ap.add_argument("--sizes", default="64,128,256,512")
    ap.add_argument("--folds", type=float, default=1.0)
    ap.add_argument("--modes", default="fast,reference")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sizes = parse_sizes(args.sizes)
    modes = [m for m in args.modes.split(",") if m]
    cfg = SolveConfig(seed=args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["family", "mode", "n", "tau", "steps", "restarts", "wall_time"])
    times = {m: [] for m in modes}
    for mode in modes:
        for n in sizes:
            r = bench_one(args.family, n, cfg, mode, "segment", args.folds)
            times[mode].append(r.wall_time)
            w.writerow([args.family, mode, n, r.tau, r.iterations, r.restarts, f"{r.wall_time:.4f}"])
            sys.stdout.flush()
    if len(sizes) > 1:
        for mode in modes:
            slope = np.polyfit(np.log(sizes), np.log(times[mode]), 1)[0]
            print(f"# {mode}: log-log slope {slope:.2f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
