"""Canned desk-scale experiment grids and the summaries read off their logs.

Both the runnable scripts and the acceptance suite build their runs here so
the reproductions stay in one place.  Desk scale means: 64-cell LSTM, the
6x6 repeat-copy grid (paper scale is 13x13) and n-gram orders 0..6, budgets
of 1.5e5..1e6 input steps, and step sizes raised above the full-scale
values in proportion to the shorter horizons.  The bandit step size also
scales with the arm count: importance weights reach N/epsilon, so a single
lucky draw of a rare arm moves its weight by up to eta * N / epsilon, which
must stay small for the syllabus to be coherent (eta = 3e-3 keeps that jump
near 2 for the 36-task grid; 7 arms tolerate 2e-2).
"""

from __future__ import annotations

import os

import numpy as np

from .config import BanditParams, RunConfig
from .nn import OptConfig
from .signals import GainKind, required_mode
from .svgplot import read_csv_columns
from .tasks import NGramSuiteSpec, RepeatCopySpec

REPEAT_COPY_BUDGET = 150_000   # cumulative input steps, well under 3e6
REPEAT_COPY_ETA = 3e-3
NGRAM_BUDGET = 1_000_000
NGRAM_ETA = 2e-2


def _mode_for(gain: str, default: str = "ml") -> str:
    mode = required_mode(GainKind(gain))
    return mode.value if mode is not None else default


def repeat_copy_config(out_dir: str, gain: str, seed: int,
                       budget: int = REPEAT_COPY_BUDGET,
                       eta: float = REPEAT_COPY_ETA,
                       stop_target_loss: float | None = 0.05) -> RunConfig:
    return RunConfig(
        task="repeat_copy", gain=gain, mode=_mode_for(gain), seed=seed,
        out_dir=out_dir, total_steps=10 ** 9, max_input_steps=budget,
        eval_every=300, eval_batches=4, batch_size=16, hidden_sizes=(64,),
        repeat_copy=RepeatCopySpec(6, 6, 3),
        opt=OptConfig(learning_rate=3e-3),
        bandit=BanditParams(eta=eta),
        stop_target_loss=None if gain == "target_only" else stop_target_loss)


def repeat_copy_grid(out_root: str, gains=("target_only", "uniform", "pg", "spg"),
                     seeds=range(5), **kw) -> list:
    return [repeat_copy_config(os.path.join(out_root, g, f"seed{s}"), g, s, **kw)
            for g in gains for s in seeds]


def ngram_config(out_dir: str, corpus_path: str, gain: str, seed: int,
                 budget: int = NGRAM_BUDGET, eta: float = NGRAM_ETA,
                 cache_dir: str | None = None) -> RunConfig:
    suite = NGramSuiteSpec(corpus_path=corpus_path, max_order=6,
                           chars_per_task=200_000, cache_dir=cache_dir)
    return RunConfig(
        task="ngram", gain=gain, mode=_mode_for(gain), seed=seed,
        out_dir=out_dir, total_steps=10 ** 9, max_input_steps=budget,
        eval_every=1000, eval_batches=2, batch_size=16, hidden_sizes=(64,),
        ngram=suite, bandit=BanditParams(eta=eta))


def ngram_grid(out_root: str, corpus_path: str, gains=("gvcg", "l2g"),
               seeds=range(3), **kw) -> list:
    return [ngram_config(os.path.join(out_root, g, f"seed{s}"), corpus_path,
                         g, s, **kw)
            for g in gains for s in seeds]


def final_quarter_policy_mass(run_dir: str, tasks) -> float:
    """Mean policy mass on the given task indices (0-based) over the last
    quarter of training rounds."""
    log = read_csv_columns(os.path.join(run_dir, "train_log.csv"))
    n = len(log["round"])
    q = 3 * n // 4
    total = np.zeros(n - q)
    for k in tasks:
        total += log[f"pi_{k + 1}"][q:]
    return float(total.mean())


def eval_metric_min(run_dir: str, metric: str = "l_tt_per_output") -> float:
    log = read_csv_columns(os.path.join(run_dir, "eval_log.csv"))
    return float(log[metric].min())
