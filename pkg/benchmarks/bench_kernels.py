"""Compiled (numba) vs pure-numpy sketch kernels.

    python benchmarks/bench_kernels.py [--d 1024] [--b 64] [--repeat 50]

Prints median wall time per call for each kernel on both paths and the
speed-up, and checks that both paths agree to rounding.
"""
import argparse
import statistics
import time

import numpy as np

from sketchfed import _kernels_numpy as npk
from sketchfed.sketch import _TAG_GAUSS, _stream_key

try:
    from sketchfed import _kernels_numba as nbk
except ImportError:  # pragma: no cover
    nbk = None


def timeit(fn, repeat):
    fn()  # warm-up / JIT
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return statistics.median(ts)


def cases(d, b, seed=0):
    rng = np.random.default_rng(seed)
    n = 1 << (d - 1).bit_length()
    v = rng.standard_normal(d)
    w = rng.standard_normal(b)
    x = rng.standard_normal(n)
    key = _stream_key(seed, _TAG_GAUSS)
    buckets = rng.integers(0, b, d)
    signs = rng.choice([-1.0, 1.0], d)
    idx = rng.integers(0, n, b)
    return {
        "fwht": lambda k: k.fwht(x),
        "gaussian_sk": lambda k: k.gaussian_sk(key, d, b, v),
        "gaussian_desk": lambda k: k.gaussian_desk(key, d, b, w),
        "gaussian_sk x2": lambda k: k.gaussian_sk(key, d, b, np.stack([v, v], 1)),
        "countsketch_sk": lambda k: k.countsketch_sk(buckets, signs, v, b),
        "countsketch_desk": lambda k: k.countsketch_desk(buckets, signs, w),
        "scatter_add": lambda k: k.scatter_add(idx, w, n),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--d", type=int, default=1024)
    ap.add_argument("--b", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if nbk is None:
        print("numba not available; nothing to compare")
        return
    print(f"d={args.d} b={args.b} repeat={args.repeat}")
    print(f"{'kernel':18s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speed-up':>9s}  max|diff|")
    for name, call in cases(args.d, args.b).items():
        a, c = call(npk), call(nbk)
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(c))))
        t_np = timeit(lambda: call(npk), args.repeat)
        t_nb = timeit(lambda: call(nbk), args.repeat)
        print(f"{name:18s} {t_np * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_np / t_nb:8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
