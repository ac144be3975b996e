"""Time the numba kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints one row per kernel and problem size with the median wall time of
each backend and the speedup. The first numba call (JIT compilation) is
excluded.
"""
import argparse
import statistics
import time

import numpy as np

from desq._kernels import _numba, _numpy


def median_time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(rng):
    for n, k, d in ((500, 7, 8), (5000, 7, 57), (20000, 5, 57)):
        X = rng.normal(size=(n, d))
        C = rng.normal(size=(k, d))
        w = np.abs(rng.normal(size=d))
        w /= np.linalg.norm(w)
        labels = rng.integers(0, k, size=n)
        tag = f"n={n} k={k} d={d}"
        yield "weighted_sq_dists", tag, (X, C, w)
        yield "weighted_scores_ip", tag, (X, C, w)
        yield "cluster_sums", tag, (X, labels, k)
        yield "weighted_objective", tag, (X, C, labels, w)
    for n in (500, 5000, 50000):
        xs = np.sort(rng.normal(size=n))
        ys = (rng.random(n) < 0.4).astype(float)
        yield "split_scan", f"n={n}", (xs, ys, True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print("kernel,size,numpy_ms,numba_ms,speedup")
    for name, tag, fargs in cases(rng):
        a = median_time(getattr(_numpy, name), fargs, args.repeat)
        b = median_time(getattr(_numba, name), fargs, args.repeat)
        print(f"{name},{tag},{a * 1e3:.3f},{b * 1e3:.3f},{a / b:.2f}")


if __name__ == "__main__":
    main()
