"""Time the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--size 1024] [--repeats 5]

Reports per-kernel wall time for both implementations and the speedup. The
first numba call includes JIT compilation, so each kernel is warmed up once
before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from uwcolor import _kernels as K


def timeit(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description="uwcolor kernel benchmark")
    parser.add_argument("--size", type=int, default=1024, help="image side length")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    h = w = args.size
    j = rng.uniform(0, 1, (h, w, 3))
    z = rng.uniform(0.1, 12.0, (h, w))
    valid = rng.uniform(size=(h, w)) > 0.02
    beta_d = np.array([0.55, 0.20, 0.12])
    beta_b = np.array([0.25, 0.18, 0.15])
    b_inf = np.array([0.04, 0.12, 0.16])
    i = K.degrade_numpy(j, z, valid, beta_d, beta_b, b_inf)

    cases = [
        ("degrade", K.degrade_numpy, K.degrade_numba,
         (j, z, valid, beta_d, beta_b, b_inf)),
        ("restore", K.restore_numpy, K.restore_numba,
         (i, z, valid, beta_d, beta_b, b_inf)),
        ("transmission", K.transmission_numpy, K.transmission_numba, (z, beta_d)),
        ("tone_curve", K.tone_curve_numpy, K.tone_curve_numba, (j, 2.0, 0.4)),
    ]

    print(f"image {h}x{w}, best of {args.repeats}")
    print(f"{'kernel':<14} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, np_fn, nb_fn, call_args in cases:
        t_np = timeit(np_fn, call_args, args.repeats)
        if nb_fn is None:
            print(f"{name:<14} {t_np * 1e3:>12.2f} {'n/a':>12} {'n/a':>9}")
            continue
        nb_fn(*call_args)  # warm-up / JIT
        t_nb = timeit(nb_fn, call_args, args.repeats)
        print(f"{name:<14} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} "
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
