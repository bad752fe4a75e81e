"""Grid-search + descent against a genetic algorithm and against descent from zero.

All three minimize the same penalty on the evaluation scenario with the
initial transmit beams held fixed.

    python scripts/compare_hris_solvers.py [--runs 10]
"""
import argparse
import time

import numpy as np

from hris_dfrc.baselines import GaParams, ga_optimize_hris
from hris_dfrc.hris_opt import HrisContext, PenaltyParams, optimize_hris, penalty_objective
from hris_dfrc.orchestrator import initial_beamformer
from hris_dfrc.scene import build_channels, table1_scene


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=10)
    args = ap.parse_args()
    ch = build_channels(table1_scene())
    ctx = HrisContext.from_design(ch, initial_beamformer(ch, 1.0), 1.0)
    pen = PenaltyParams()

    t0 = time.perf_counter()
    ref = optimize_hris(ctx, pen)
    print(f"FGS + AGD      f = {ref.f_value:10.3f}  radar {10 * np.log10(ref.report.eta_r):6.2f} dB"
          f"  ({time.perf_counter() - t0:.2f} s)")
    t0 = time.perf_counter()
    cold = optimize_hris(ctx, pen, fgs=None)
    print(f"AGD from zero  f = {cold.f_value:10.3f}  radar {10 * np.log10(cold.report.eta_r):6.2f} dB"
          f"  ({time.perf_counter() - t0:.2f} s)")
    worse = 0
    for seed in range(args.runs):
        t0 = time.perf_counter()
        beta = ga_optimize_hris(ctx, pen, GaParams(seed=seed), np.random.default_rng(seed))
        f = penalty_objective(beta, ctx, pen)
        worse += f >= ref.f_value - 1e-6
        print(f"GA seed {seed:<3}    f = {f:10.3f}  ({time.perf_counter() - t0:.2f} s)")
    print(f"GA no better than FGS + AGD in {worse}/{args.runs} runs")


if __name__ == "__main__":
    main()
