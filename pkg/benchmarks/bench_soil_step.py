#!/usr/bin/env python3
"""Benchmark the soil-column stepper backends (compiled vs numpy).

Times a representative 2-hour implicit-Euler step from a mid-range moisture
state, with irrigation and evapotranspiration active, for both the Cython
kernel and the pure-numpy fallback, and checks that the two agree.

Usage: python3 benchmarks/bench_soil_step.py [--repeats N] [--steps N]
"""

import argparse
import time

import numpy as np

from irriloop import soil
from irriloop.soil import _fallback

try:
    from irriloop.soil import _kernel
except ImportError:
    _kernel = None


def run(advance, h0, n_steps, opts):
    p = soil.SANDY_LOAM
    g = soil.ColumnGeometry()
    s = opts.stress
    h = h0.copy()
    for _ in range(n_steps):
        h, *_ = advance(
            h, 7200.0, 2.0e-7, 3.0e-8,
            (p.ks, p.theta_s, p.theta_r, p.alpha, p.n),
            g.dz, g.n_root_nodes, abs(g.z_r),
            (s.h_anaer, s.h_wet_full, s.h_dry_full, s.h_wilt),
            substep_init=opts.substep_init, newton_tol=opts.newton_tol,
            max_newton=opts.max_newton, min_substep=opts.min_substep,
            geometric_mean=opts.geometric_mean)
        h = np.asarray(h)
    return h


def bench(advance, h0, n_steps, repeats, opts):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        h = run(advance, h0, n_steps, opts)
        best = min(best, time.perf_counter() - t0)
    return best, h


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--steps", type=int, default=50,
                    help="2-hour steps per timed run")
    args = ap.parse_args()

    p = soil.SANDY_LOAM
    g = soil.ColumnGeometry()
    opts = soil.DEFAULT_OPTIONS
    h0 = soil.uniform_state(soil.potential_from_water_content(0.26, p)).h

    print(f"active backend at import: {soil.backend_name()}")
    print(f"{args.steps} steps of 7200 s, best of {args.repeats} repeats\n")

    t_np, h_np = bench(_fallback.advance, h0, args.steps, args.repeats, opts)
    per_np = t_np / args.steps * 1e3
    print(f"numpy fallback : {t_np:8.3f} s total  {per_np:7.3f} ms/step")

    if _kernel is None:
        print("cython kernel  : not built (pip install -e . to compile)")
        return

    t_cy, h_cy = bench(_kernel.advance, h0, args.steps, args.repeats, opts)
    per_cy = t_cy / args.steps * 1e3
    print(f"cython kernel  : {t_cy:8.3f} s total  {per_cy:7.3f} ms/step")
    print(f"speedup        : {t_np / t_cy:8.2f}x")

    diff = float(np.max(np.abs(np.asarray(h_cy) - np.asarray(h_np))))
    print(f"max |dh| between backends after {args.steps} steps: {diff:.3e} m")
    if diff > 1e-8:
        raise SystemExit("backends disagree beyond tolerance")


if __name__ == "__main__":
    main()
