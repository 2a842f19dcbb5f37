"""Time the sequential kernels under the numba and pure-Python backends.

Each backend runs in its own interpreter (the backend is fixed at import by
SNSPDWALK_DISABLE_NUMBA), on identical pre-drawn inputs.  Numba timings
exclude the first, compiling call.

    python3 benchmarks/bench_kernels.py --n 200000 --repeat 3
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

PERIOD_PS = 1e12 / 537.5e6


def inputs(n, seed=0):
    from snspdwalk.core import DetectorConfig

    rng = np.random.default_rng(seed)
    det = DetectorConfig()
    photons = np.cumsum(rng.geometric(0.02, n)) * PERIOD_PS
    detect = (photons, rng.random(n), rng.standard_normal(n), det.tau_bias_ps, det.tau_rf_ps, det.rise_time_ps,
              det.pulse_height_mv, det.threshold_mv, det.highpass_tau_ps, det.intrinsic_jitter_sigma_ps,
              det.efficiency_max, det.efficiency_exponent, det.holdoff)
    tags = np.floor(photons + rng.normal(0, 21, n))
    tags = np.sort(tags) - tags.min()
    itags = tags.astype(np.int64)
    tp = np.linspace(20_000, 600_000, 300)
    return {
        "detect": detect,
        "pll": (tags, PERIOD_PS, 0.01, 1e-4),
        "deadtime": (itags, np.int64(100_000)),
        "correct_chained": (itags, tp, 200 * np.exp(-tp / 40_000)),
    }


def worker(n, repeat):
    from snspdwalk import _accel, kernels

    funcs = {"detect": kernels.detect_loop, "pll": kernels.pll_loop, "deadtime": kernels.deadtime_loop,
             "correct_chained": kernels.correct_chained}
    out = {"backend": _accel.backend()}
    for name, args in inputs(n).items():
        fn = funcs[name]
        if _accel.USE_NUMBA:
            fn(*args)  # compile
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn(*args)
            best = min(best, time.perf_counter() - t0)
        out[name] = best
    print(json.dumps(out))


def run_backend(disable, n, repeat):
    env = dict(os.environ, SNSPDWALK_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--worker", "--n", str(n), "--repeat", str(repeat)]
    return json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000, help="elements per kernel call")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.worker:
        worker(args.n, args.repeat)
        return
    fast = run_backend(False, args.n, args.repeat)
    slow = run_backend(True, args.n, args.repeat)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<16} {fast['backend']:>10} {slow['backend']:>10} {'speedup':>8}")
    for name in ("detect", "pll", "deadtime", "correct_chained"):
        print(f"{name:<16} {fast[name] * 1e3:>8.2f}ms {slow[name] * 1e3:>8.2f}ms {slow[name] / fast[name]:>7.1f}x")


if __name__ == "__main__":
    main()
