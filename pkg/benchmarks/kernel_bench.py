"""Benchmark the compiled kernels against the numpy fallbacks.

Run inside an environment where the extension is built:

    python benchmarks/kernel_bench.py

Covers the two hot loops: nearest-centroid assignment (the k-means inner
step at segmentation sizes) and gather-accumulate (the upsampling engine's
per-transform reduction).
"""

from __future__ import annotations

import time

import numpy as np

from featpipe import _kernels
from featpipe._kernels import _numpy


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_assign(rng):
    print("nearest-centroid assignment (points x centroids x dims)")
    print(f"{'size':>28} {'compiled':>10} {'numpy':>10} {'speedup':>8}")
    for n, c, d in [(16_384, 80, 3), (65_536, 80, 16), (262_144, 80, 64)]:
        points = rng.normal(size=(n, d))
        centroids = rng.normal(size=(c, d))
        labels = np.empty(n, dtype=np.int32)
        dist = np.empty(n)

        def compiled():
            _kernels._core.assign_nearest(points, centroids, labels, dist)

        def fallback():
            _numpy.assign_nearest(points, centroids)

        tc = timeit(compiled)
        tn = timeit(fallback)
        print(f"{f'{n}x{c}x{d}':>28} {tc * 1e3:>9.2f}ms {tn * 1e3:>9.2f}ms {tn / tc:>7.2f}x")


def bench_gather(rng):
    print("\ngather-accumulate (pixels x dims, one transform contribution)")
    print(f"{'size':>28} {'compiled':>10} {'numpy':>10} {'speedup':>8}")
    for n, m, d in [(262_144, 4_096, 3), (262_144, 16_384, 64), (1_048_576, 65_536, 16)]:
        values = rng.normal(size=(m, d)).astype(np.float32)
        index = rng.integers(0, m, size=n)
        acc = np.zeros((n, d))

        def compiled():
            _kernels._core.gather_accumulate_f32(acc, values, index)

        def fallback():
            _numpy.gather_accumulate(acc, values, index)

        tc = timeit(compiled)
        tn = timeit(fallback)
        print(f"{f'{n}<-{m}x{d}':>28} {tc * 1e3:>9.2f}ms {tn * 1e3:>9.2f}ms {tn / tc:>7.2f}x")


def main():
    if not _kernels.HAVE_COMPILED:
        raise SystemExit(
            "compiled extension not available (build with `pip install -e .`); "
            "nothing to compare"
        )
    rng = np.random.default_rng(0)
    print(f"active kernel backend: {_kernels.BACKEND}\n")
    bench_assign(rng)
    bench_gather(rng)


if __name__ == "__main__":
    main()
