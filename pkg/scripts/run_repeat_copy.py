#!/usr/bin/env python3
"""Desk-scale repeat-copy reproduction: 6x6 grid, 64-cell LSTM.

Runs the baseline policies (target-only, uniform) against bandit syllabuses
(pg, spg by default) over several seeds, then prints the steps-to-threshold
table for the target task and the target-only failure check.
"""

import argparse
import os

from autocurriculum.cli import run_sweep
from autocurriculum.compare import compare, format_table
from autocurriculum.experiments import (REPEAT_COPY_BUDGET, eval_metric_min,
                                        repeat_copy_grid)
from autocurriculum.tasks import LN2


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/repeat_copy")
    p.add_argument("--gains", default="target_only,uniform,pg,spg")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--budget", type=int, default=REPEAT_COPY_BUDGET)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = p.parse_args()

    gains = [g.strip() for g in args.gains.split(",")]
    kw = {"budget": args.budget}
    if args.eta is not None:
        kw["eta"] = args.eta
    configs = repeat_copy_grid(args.out, gains=gains, seeds=range(args.seeds), **kw)
    for line in run_sweep(configs, args.workers):
        print(line)

    run_dirs = [c.out_dir for c in configs if c.gain != "target_only"]
    crossings, rows = compare(run_dirs, metric="l_tt_per_output",
                              threshold=args.threshold)
    print()
    print(format_table(rows, crossings))
    if "target_only" in gains:
        print("\ntarget-only minimum target loss per output "
              f"(failure means staying above {0.5 * LN2:.4f}):")
        for seed in range(args.seeds):
            d = os.path.join(args.out, "target_only", f"seed{seed}")
            print(f"  seed {seed}: {eval_metric_min(d):.4f}")


if __name__ == "__main__":
    main()
