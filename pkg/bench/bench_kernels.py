"""Benchmark the compiled kernels against the NumPy fallback.

    python bench/bench_kernels.py [--repeats 7]

Prints one row per (kernel, problem size) with per-call times for both
backends and the speedup of the compiled path.
"""

import argparse
import time

import numpy as np

from promptgate import kernels
from promptgate.kernels import numpy_backend

try:
    from promptgate.kernels import _native
except ImportError:
    _native = None

# fold_chunk is not benchmarked: it always takes the NumPy path (BLAS
# rank-k update), which the compiled loop kernels measured 0.2-0.8x against.
SIZES = {
    "mahalanobis_many": [(1000, 8), (5000, 16), (20000, 32), (5000, 64)],
    "rmd_many": [(1000, 8, 4), (5000, 16, 10), (20000, 32, 20), (5000, 64, 40)],
}


def build_args(kernel, size, rng):
    if kernel == "mahalanobis_many":
        n, d = size
        a = rng.standard_normal((d, d))
        return (rng.standard_normal((n, d)), rng.standard_normal(d),
                np.ascontiguousarray(a @ a.T + np.eye(d)))
    n, d, c = size
    a = rng.standard_normal((d, d))
    return (rng.standard_normal((n, d)), rng.standard_normal((c, d)),
            rng.uniform(0, 4, size=c),
            np.ascontiguousarray(a @ a.T + np.eye(d)))


def best_time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if _native is None:
        print("native kernels are not built; install with the Cython extension "
              "to compare backends")
        return

    rng = np.random.default_rng(0)
    print(f"backends available: {kernels.available_backends()}")
    print(f"{'kernel':<18} {'size':<18} {'numpy':>12} {'native':>12} {'speedup':>9}")
    for kernel, sizes in SIZES.items():
        for size in sizes:
            call_args = build_args(kernel, size, rng)
            call_args = tuple(np.ascontiguousarray(a) for a in call_args)
            t_np = best_time(getattr(numpy_backend, kernel), call_args, args.repeats)
            t_nat = best_time(getattr(_native, kernel), call_args, args.repeats)
            label = "x".join(str(s) for s in size)
            print(f"{kernel:<18} {label:<18} {t_np * 1e3:>10.3f}ms "
                  f"{t_nat * 1e3:>10.3f}ms {t_np / t_nat:>8.2f}x")


if __name__ == "__main__":
    main()
