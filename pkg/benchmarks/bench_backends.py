#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the same replications (identical substreams) through both backends,
verifies the stopping times agree exactly, and reports throughput per
chart family.

Usage: python benchmarks/bench_backends.py [--reps 200] [--seed 1]
"""

import argparse
import math
import time

import numpy as np

from seqwatch import ChartConfig, build_model
from seqwatch._backend import get_kernels
from seqwatch.simulate import _run_taus

MODEL = build_model("intraclass", 20, 0.8, theta=0.25 / 0.8)

BENCH_CHARTS = [
    ("mewma", ChartConfig("mewma", threshold=1.07, beta=0.05)),
    ("mewma hard", ChartConfig("mewma", threshold=0.39, beta=0.05,
                               threshold_mode="hard", mode_param=0.5)),
    ("mma", ChartConfig("mma", threshold=2.1125, window=20)),
    ("mcusum windowed", ChartConfig("mcusum_windowed", threshold=24.15,
                                    window=20, k_ref=0.5)),
    ("glrt", ChartConfig("glrt", threshold=7.08 ** 2, window=20)),
    ("mcusum recursive", ChartConfig("mcusum_recursive", threshold=31.0, k_ref=0.5)),
    ("sr mixture", ChartConfig("sr_mixture", threshold=747.29,
                               k_ref=0.5 / math.sqrt(20.0))),
    ("sum sr", ChartConfig("sum_sr", threshold=14945.83, k_ref=0.5)),
    ("adaptive cusum", ChartConfig("adaptive_cusum", threshold=4.6, beta=0.05)),
    ("adaptive sum sr", ChartConfig("adaptive_sum_sr", threshold=15050.0,
                                    beta=0.05)),
]

# hard/soft thresholding assumes an identity model
IDENT = build_model("identity", 20, 1.0)


def bench_one(cfg, reps, seed, horizon, kernels):
    model = IDENT if cfg.threshold_mode != "none" else MODEL
    t0 = time.perf_counter()
    taus = _run_taus(cfg, model, None, None, horizon, reps, seed,
                     threads=1, kernels=kernels)
    elapsed = time.perf_counter() - t0
    steps = int(np.where(taus == 0, horizon, taus).sum())
    return taus, steps, elapsed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--horizon", type=int, default=4000)
    args = ap.parse_args()

    try:
        compiled = get_kernels("compiled")
    except ImportError:
        raise SystemExit("compiled kernels unavailable; build the extension "
                         "first (pip install -e . --no-build-isolation)")
    fallback = get_kernels("python")

    print(f"{'chart':<18} {'steps':>9} {'compiled':>10} {'python':>10} "
          f"{'speedup':>8}  (reps={args.reps}, N=20)")
    for label, cfg in BENCH_CHARTS:
        taus_c, steps, t_c = bench_one(cfg, args.reps, args.seed, args.horizon, compiled)
        taus_p, _, t_p = bench_one(cfg, args.reps, args.seed, args.horizon, fallback)
        if not np.array_equal(taus_c, taus_p):
            raise SystemExit(f"backend mismatch for {label}")
        print(f"{label:<18} {steps:>9} {t_c:>9.3f}s {t_p:>9.3f}s "
              f"{t_p / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
