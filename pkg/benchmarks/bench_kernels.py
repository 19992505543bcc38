"""Benchmark the hot kernels: numba loop vs vectorized numpy.

Runs both implementations directly (the PADAMP_NO_NUMBA flag is bypassed)
and reports best-of-N wall times per input size.

Usage: python benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from padamp import _kernels


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_moment_direction(dim, repeats, rng):
    g = rng.standard_normal(dim)
    results = {}
    impls = [("numpy", _kernels._moment_direction_numpy)]
    if _kernels.HAS_NUMBA:
        impls.append(("numba", _kernels._moment_direction_nb))
    for label, impl in impls:
        m = np.zeros(dim)
        v = np.zeros(dim)
        max_v = np.zeros(dim)

        def call():
            impl(m, v, max_v, g, 0.9, 0.999, 0.1, 0.001, 1e-8, 0.25,
                 False, True)

        call()  # warm-up (JIT compile on the numba path)
        results[label] = best_of(call, repeats)
    return results


def bench_norm_growth(steps, repeats, rng):
    u = rng.standard_normal(steps) ** 2 / np.arange(1, steps + 1) ** 2
    results = {}
    impls = [("numpy", _kernels._norm_growth_loop)]
    if _kernels.HAS_NUMBA:
        impls.append(("numba", _kernels._norm_growth_nb))
    for label, impl in impls:
        def call():
            impl(u, 0.9, 1.0, 1.0)

        call()
        results[label] = best_of(call, repeats)
    return results


def report(title, rows):
    print(title)
    print(f"{'size':>10} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for size, res in rows:
        np_t = res["numpy"]
        if "numba" in res:
            nb_t = res["numba"]
            print(f"{size:>10} {np_t * 1e6:>10.1f}us {nb_t * 1e6:>10.1f}us "
                  f"{np_t / nb_t:>8.2f}x")
        else:
            print(f"{size:>10} {np_t * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba not importable; timing the numpy path only\n")
    rng = np.random.default_rng(0)

    rows = [(d, bench_moment_direction(d, args.repeats, rng))
            for d in (100, 10_000, 1_000_000)]
    report("moment_direction (fused moment update + preconditioned step)", rows)

    rows = [(t, bench_norm_growth(t, args.repeats, rng))
            for t in (10_000, 100_000, 1_000_000)]
    report("norm_growth_arrays (coupled norm recursions)", rows)


if __name__ == "__main__":
    main()
