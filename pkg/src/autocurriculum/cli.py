"""Command-line front end.

Subcommands: run, sweep, plot, compare, gradcheck, gen-ngram.
Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from .config import (ConfigError, RunConfig, apply_overrides, config_from_dict,
                     config_to_dict, load_config)
from .harness import NumericalAbort, run
from .signals import GainKind, required_mode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _base_dict(args) -> dict:
    if args.config:
        cfg = load_config(args.config)
        data = config_to_dict(cfg)
    else:
        data = config_to_dict(RunConfig())
    return data


def _cmd_run(args) -> int:
    data = _base_dict(args)
    apply_overrides(data, args.set or [])
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out_dir"] = args.out
    cfg = config_from_dict(data)
    result = run(cfg)
    print(f"run finished: {result.rounds} rounds, "
          f"{result.cum_input_steps} input steps -> {result.out_dir}")
    print(f"final target loss per output: {result.final_eval.l_tt_per_output:.4f}")
    return EXIT_OK


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def sweep_configs(base: dict, gains: list[str], seeds: list[int],
                  out_root: str) -> list[RunConfig]:
    """One config per (gain, seed), each in its own subdirectory.  The
    training mode follows the gain; baselines keep the base config's mode."""
    configs = []
    for gain in gains:
        mode = required_mode(GainKind(gain))
        for seed in seeds:
            data = json.loads(json.dumps(base))
            data["gain"] = gain
            if mode is not None:
                data["mode"] = mode.value
            data["seed"] = seed
            data["out_dir"] = os.path.join(out_root, gain, f"seed{seed}")
            configs.append(config_from_dict(data))
    return configs


def _sweep_worker(cfg_dict: dict) -> str:
    try:  # parallel workers should not fight over BLAS threads
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=1)
    except ImportError:
        pass
    cfg = config_from_dict(cfg_dict)
    result = run(cfg)
    return (f"{cfg.gain} seed {cfg.seed}: {result.rounds} rounds, "
            f"target po loss {result.final_eval.l_tt_per_output:.4f}")


def run_sweep(configs: list[RunConfig], workers: int) -> list[str]:
    payloads = [config_to_dict(c) for c in configs]
    if workers <= 1:
        return [_sweep_worker(p) for p in payloads]
    out = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        for line in pool.map(_sweep_worker, payloads):
            out.append(line)
    return out


def _cmd_sweep(args) -> int:
    data = _base_dict(args)
    apply_overrides(data, args.set or [])
    gains = [g.strip() for g in args.gains.split(",") if g.strip()]
    if not gains:
        raise ConfigError("sweep needs at least one gain")
    seeds = _parse_seeds(args.seeds)
    configs = sweep_configs(data, gains, seeds, args.out)
    for line in run_sweep(configs, args.workers):
        print(line)
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .svgplot import render_band_plots, render_run_plots

    if len(args.run) == 1:
        for path in render_run_plots(args.run[0], args.out):
            print(path)
    else:
        out_dir = args.out or "."
        os.makedirs(out_dir, exist_ok=True)
        path = render_band_plots(args.run, metric=args.metric,
                                 out_path=os.path.join(out_dir, "bands.svg"))
        print(path)
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .compare import compare, format_table, write_csv

    crossings, rows = compare(args.runs, metric=args.metric,
                              threshold=args.threshold, direction=args.direction,
                              baseline_gain=args.baseline)
    print(format_table(rows, crossings))
    if args.out:
        write_csv(rows, crossings, args.out)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_full_gradcheck

    reports = run_full_gradcheck(seed=args.seed, n_coords=args.coords)
    worst = 0.0
    for r in reports:
        status = "ok" if r.ok(args.tol) else "FAIL"
        print(f"{r.name:>14}: {r.n_coords} coords, "
              f"max rel err {r.max_rel_err:.3e} [{status}]")
        worst = max(worst, r.max_rel_err)
    if worst >= args.tol:
        print(f"gradient check FAILED (tolerance {args.tol})")
        return 1
    print("all gradients ok")
    return EXIT_OK


def _cmd_gen_ngram(args) -> int:
    from .tasks import NGramModel, load_or_generate_stream

    with open(args.corpus, encoding="utf-8") as f:
        corpus = f.read()
    model = NGramModel.fit(corpus, args.max_order, args.discount)
    cache_dir = args.cache_dir or os.path.join(
        os.path.dirname(os.path.abspath(args.corpus)), "ngram_cache")
    for order in range(args.max_order + 1):
        stream = load_or_generate_stream(cache_dir, corpus, model, order,
                                         args.seed, args.chars)
        print(f"order {order}: {len(stream)} chars cached in {cache_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autocurriculum")
    sub = p.add_subparsers(dest="cmd", required=True)

    rp = sub.add_parser("run", help="execute one training run")
    rp.add_argument("--config", help="JSON config file")
    rp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override any config field, e.g. --set bandit.eta=0.01")
    rp.add_argument("--seed", type=int)
    rp.add_argument("--out")
    rp.set_defaults(fn=_cmd_run)

    sp = sub.add_parser("sweep", help="run a seeds x gains grid as processes")
    sp.add_argument("--config", help="base JSON config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--gains", required=True, help="comma list, e.g. pg,uniform")
    sp.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 0,3,7")
    sp.add_argument("--out", required=True, help="sweep root directory")
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(fn=_cmd_sweep)

    pp = sub.add_parser("plot", help="render SVG figures from run logs")
    pp.add_argument("--run", action="append", required=True, help="run directory")
    pp.add_argument("--out", help="output directory (default: the run dir)")
    pp.add_argument("--metric", default="l_tt_per_output")
    pp.set_defaults(fn=_cmd_plot)

    cp = sub.add_parser("compare", help="steps-to-threshold table across runs")
    cp.add_argument("--runs", nargs="+", required=True)
    cp.add_argument("--metric", default="l_tt_per_output")
    cp.add_argument("--threshold", type=float, required=True)
    cp.add_argument("--direction", choices=("below", "above"), default="below")
    cp.add_argument("--baseline", default="uniform")
    cp.add_argument("--out", help="also write the table as CSV")
    cp.set_defaults(fn=_cmd_compare)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--coords", type=int, default=200)
    gp.add_argument("--tol", type=float, default=1e-4)
    gp.set_defaults(fn=_cmd_gradcheck)

    np_ = sub.add_parser("gen-ngram", help="fit models and cache generated datasets")
    np_.add_argument("--corpus", required=True)
    np_.add_argument("--max-order", type=int, default=6)
    np_.add_argument("--chars", type=int, default=200_000)
    np_.add_argument("--seed", type=int, default=0)
    np_.add_argument("--discount", type=float, default=0.75)
    np_.add_argument("--cache-dir")
    np_.set_defaults(fn=_cmd_gen_ngram)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
