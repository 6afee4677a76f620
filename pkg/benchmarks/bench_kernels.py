"""Time the bootstrap cross-moment kernel on both backends.

The numba path fuses the row gather with the accumulation; the numpy
path materialises each resample and calls BLAS. Run:

    python benchmarks/bench_kernels.py [--rows N] [--replicates M] [--cols Q]
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from ivgraph import _kernels
from ivgraph.bootstrap import index_matrix


def time_backend(label, fn, w, idx, repeats):
    fn(w, idx[:2])  # warm up (JIT compile, thread pools)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(w, idx)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=10_000)
    parser.add_argument("--replicates", type=int, default=1000)
    parser.add_argument("--cols", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    w = rng.standard_normal((args.rows, args.cols))
    idx = index_matrix(args.rows, args.replicates, seed=0)

    os.environ[_kernels.DISABLE_ENV] = "1"
    t_numpy = time_backend("numpy", _kernels.cross_moment_scan, w, idx, args.repeats)
    results = [("numpy", t_numpy)]

    if _kernels.HAVE_NUMBA:
        os.environ.pop(_kernels.DISABLE_ENV, None)
        t_numba = time_backend("numba", _kernels.cross_moment_scan, w, idx, args.repeats)
        results.append(("numba", t_numba))

    print(f"rows={args.rows} replicates={args.replicates} cols={args.cols} (best of {args.repeats})")
    for label, t in results:
        throughput = args.rows * args.replicates / t / 1e6
        print(f"  {label:>6}: {t * 1e3:8.2f} ms   {throughput:8.1f} M gathered rows/s")
    if len(results) == 2:
        print(f"  speedup: {results[0][1] / results[1][1]:.2f}x (numba over numpy)")


if __name__ == "__main__":
    main()
