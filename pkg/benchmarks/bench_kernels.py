"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeats 20] [--scale 1.0]

The first numba call compiles (or loads the on-disk cache) and is excluded.
Results go to stdout as a table with the median time per call and the
speed-up of numba over numpy.
"""
import argparse
import statistics
import time

import numpy as np

from hypergp import _accel


def make_inputs(rng, scale):
    n = max(10, int(400 * scale))
    nnz = max(10, int(20000 * scale))
    conf = rng.uniform(size=nnz)
    a = rng.integers(0, 6, nnz).astype(np.int64)
    b = rng.integers(0, 8, nnz).astype(np.int64)
    rows = rng.integers(0, n, nnz).astype(np.int64)
    cols = rng.integers(0, n, nnz).astype(np.int64)
    u, w = rng.normal(size=(n, 10)), rng.normal(size=(n, 10))
    return {
        "kmeans_assign": (rng.normal(size=(n * 5, 8)), rng.normal(size=(12, 8))),
        "sq_dists": (rng.normal(size=(n, 2)),),
        "pair_dots": (rows, cols, u, w),
        "pair_scatter": (rows, cols, rng.normal(size=nnz), u, w),
        "contingency": (a, b, 6, 8),
        "emi": (_accel.NUMPY["contingency"](a[:2000], b[:2000], 6, 8),),
        "calibration_bins": (conf, rng.uniform(size=nnz) < 0.5, 10),
    }


def time_call(fn, args, repeats):
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--scale", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    inputs = make_inputs(np.random.default_rng(args.seed), args.scale)
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name in sorted(inputs):
        call = inputs[name]
        jitted = _accel.get_kernel(name, "numba")
        jitted(*call)
        t_np = time_call(_accel.get_kernel(name, "numpy"), call, args.repeats)
        t_nb = time_call(jitted, call, args.repeats)
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
