#!/usr/bin/env python3
"""Benchmark the numba hot kernels against the pure-numpy fallback.

Both code paths are imported directly from riesz_flow._accel regardless of the
RIESZ_FLOW_NUMBA flag, so a single process times them side by side. The first
numba call per kernel compiles (cached on disk); compilation time is excluded
by a warmup call.

Usage: python benchmarks/bench_accel.py [--sizes 512,1024,2048] [--repeats 20]
"""

import argparse
import time

import numpy as np

from riesz_flow import _accel
from riesz_flow.manifold import build_sphere


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="512,1024,2048")
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    numba_ok = _accel._HAVE_NUMBA
    if not numba_ok:
        print("numba backend unavailable (RIESZ_FLOW_NUMBA=0 or not installed); "
              "timing numpy only")
    print(f"workers: {_accel.worker_count()}")

    kernels = [
        ("pairwise_dist", lambda g, K, f, w: (g.nodes,)),
        ("power_entries", lambda g, K, f, w: (g.chordal, -0.5, 0.4)),
        ("matvec_weighted", lambda g, K, f, w: (K, f, w)),
        ("weighted_pow_sum", lambda g, K, f, w: (w, f, 1.6)),
        ("abs_dev_pow_sum", lambda g, K, f, w: (w, f, 1.1, 2.0, f, 1.6)),
    ]
    header = f"{'kernel':18s} {'N':>6s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for N in sizes:
        geom = build_sphere(1, N)
        rng = np.random.default_rng(0)
        K = rng.random((N, N))
        K = 0.5 * (K + K.T) + 0.1
        f = rng.random(N) + 0.5
        w = geom.weights
        for name, argfn in kernels:
            call_args = argfn(geom, K, f, w)
            np_fn = getattr(_accel, "_np_" + name)
            t_np = timeit(lambda: np_fn(*call_args), args.repeats)
            if numba_ok:
                nb_fn = getattr(_accel, "_nb_" + name)
                nb_fn(*call_args)  # warmup / compile
                t_nb = timeit(lambda: nb_fn(*call_args), args.repeats)
                ref = np.asarray(np_fn(*call_args), dtype=float)
                alt = np.asarray(nb_fn(*call_args), dtype=float)
                scale = max(1.0, float(np.max(np.abs(ref))))
                if np.max(np.abs(ref - alt)) / scale > 1e-10:
                    raise AssertionError(f"{name}: backends disagree")
                print(f"{name:18s} {N:6d} {t_np * 1e3:10.3f}ms {t_nb * 1e3:10.3f}ms "
                      f"{t_np / t_nb:7.2f}x")
            else:
                print(f"{name:18s} {N:6d} {t_np * 1e3:10.3f}ms {'-':>12s} {'-':>8s}")
    print("\n(speedup > 1 means numba wins; dense matvec is BLAS-bound and "
          "usually favors numpy at low thread counts)")


if __name__ == "__main__":
    main()
