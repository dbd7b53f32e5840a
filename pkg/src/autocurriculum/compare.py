"""Steps-to-threshold comparison across finished runs.

For each run: the cumulative-input-step count at the first evaluation row
whose metric crosses the threshold.  Runs that never cross are censored at
their final step count and still enter the medians (marked in the output
rather than dropped).  Runs are grouped by their configured gain and each
group's median is expressed as a ratio against the baseline group.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .svgplot import read_csv_columns


@dataclass
class RunCrossing:
    run_dir: str
    gain: str
    seed: int
    steps: float
    censored: bool


@dataclass
class GroupRow:
    gain: str
    n_runs: int
    n_censored: int
    median: float
    iqr_lo: float
    iqr_hi: float
    ratio_vs_baseline: float | None


def crossing_step(run_dir: str, metric: str, threshold: float,
                  direction: str = "below") -> tuple[float, bool]:
    """(cum_input_steps at first crossing, censored?) for one run."""
    ev = read_csv_columns(os.path.join(run_dir, "eval_log.csv"))
    if metric not in ev:
        raise ValueError(f"{run_dir}: eval log has no column {metric!r}")
    values = ev[metric]
    steps = ev["cum_input_steps"]
    if direction == "below":
        hits = np.nonzero(values < threshold)[0]
    elif direction == "above":
        hits = np.nonzero(values > threshold)[0]
    else:
        raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")
    if hits.size:
        return float(steps[hits[0]]), False
    return float(steps[-1]) if steps.size else float("nan"), True


def run_gain_and_seed(run_dir: str) -> tuple[str, int]:
    with open(os.path.join(run_dir, "config.json")) as f:
        cfg = json.load(f)
    return cfg["gain"], int(cfg["seed"])


def compare(run_dirs, metric: str = "l_tt_per_output", threshold: float = 0.05,
            direction: str = "below", baseline_gain: str = "uniform"):
    """Returns (per-run crossings, per-gain rows sorted with baseline first)."""
    crossings = []
    for d in run_dirs:
        gain, seed = run_gain_and_seed(d)
        steps, censored = crossing_step(d, metric, threshold, direction)
        crossings.append(RunCrossing(d, gain, seed, steps, censored))

    by_gain: dict[str, list[RunCrossing]] = {}
    for c in crossings:
        by_gain.setdefault(c.gain, []).append(c)

    base_median = None
    if baseline_gain in by_gain:
        base_median = float(np.median([c.steps for c in by_gain[baseline_gain]]))

    rows = []
    for gain, items in sorted(by_gain.items(), key=lambda kv: kv[0] != baseline_gain):
        steps = np.asarray([c.steps for c in items])
        ratio = None
        if base_median:
            ratio = float(np.median(steps) / base_median)
        rows.append(GroupRow(
            gain=gain, n_runs=len(items),
            n_censored=sum(c.censored for c in items),
            median=float(np.median(steps)),
            iqr_lo=float(np.percentile(steps, 25)),
            iqr_hi=float(np.percentile(steps, 75)),
            ratio_vs_baseline=ratio))
    return crossings, rows


def format_table(rows, crossings=None) -> str:
    lines = [f"{'gain':>12} {'runs':>5} {'censored':>9} {'median':>12} "
             f"{'iqr25':>12} {'iqr75':>12} {'vs baseline':>12}"]
    for r in rows:
        ratio = f"{r.ratio_vs_baseline:.3f}" if r.ratio_vs_baseline is not None else "-"
        lines.append(f"{r.gain:>12} {r.n_runs:>5} {r.n_censored:>9} "
                     f"{r.median:>12.0f} {r.iqr_lo:>12.0f} {r.iqr_hi:>12.0f} "
                     f"{ratio:>12}")
    if crossings:
        lines.append("")
        for c in sorted(crossings, key=lambda c: (c.gain, c.seed)):
            mark = " (censored)" if c.censored else ""
            lines.append(f"  {c.gain} seed {c.seed}: {c.steps:.0f}{mark}")
    return "\n".join(lines)


def write_csv(rows, crossings, path: str) -> None:
    with open(path, "w") as f:
        f.write("gain,n_runs,n_censored,median,iqr25,iqr75,ratio_vs_baseline\n")
        for r in rows:
            ratio = "" if r.ratio_vs_baseline is None else repr(r.ratio_vs_baseline)
            f.write(f"{r.gain},{r.n_runs},{r.n_censored},{r.median!r},"
                    f"{r.iqr_lo!r},{r.iqr_hi!r},{ratio}\n")
        f.write("run_dir,gain,seed,steps,censored\n")
        for c in crossings:
            f.write(f"{c.run_dir},{c.gain},{c.seed},{c.steps!r},{int(c.censored)}\n")
