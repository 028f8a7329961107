"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--size 256] [--repeat 3]

Both backends receive identical inputs; the last column is the speed-up of
the compiled module.
"""
import argparse
import time

import numpy as np
from scipy.ndimage import gaussian_filter

from geoprior._backend import available, load


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    z = gaussian_filter(rng.normal(size=(size, size)), 2.0) * 50 + 100
    valid = np.ones_like(z, dtype=np.uint8)
    a = rng.integers(0, 500, size * size).astype(np.float64)
    b = rng.normal(size=size * size)
    X = rng.normal(size=(1000, 8))
    y = (X[:, 0] + rng.normal(size=1000) > 0).astype(np.int64)
    keys = rng.random((2 * 1000, 8))
    jx = np.sort(rng.random(2000))

    def hydro(k):
        filled = k.priority_flood(z, valid, 1e-5)
        dirs = k.d8_directions(filled, valid, 10.0)
        order = k.topological_order(dirs, valid)
        return k.accumulate(dirs, order, np.ones(z.size), np.ones(z.size, dtype=np.uint8))

    return [
        (f"fill + D8 + accumulate {size}x{size}", hydro),
        (f"dominance counts n={a.size}", lambda k: k.dominance_counts(a, b)),
        ("tree build n=1000 p=8", lambda k: k.build_tree(X, y, 3, 1, -1, keys)),
        ("Jenks n=2000 k=5", lambda k: k.jenks_dp(jx, 5)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = {name: load(name) for name in available()}
    rng = np.random.default_rng(0)
    names = list(backends)
    print(f"{'kernel':<34}" + "".join(f"{n + ' (s)':>14}" for n in names) + f"{'speed-up':>10}")
    for label, fn in cases(args.size, rng):
        t = {n: _best(lambda: fn(k), args.repeat) for n, k in backends.items()}
        ratio = t["python"] / t["cython"] if len(t) == 2 else float("nan")
        print(f"{label:<34}" + "".join(f"{t[n]:>14.4f}" for n in names) + f"{ratio:>10.1f}")


if __name__ == "__main__":
    main()
