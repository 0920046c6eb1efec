"""Time the numba and numpy kernels on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 801]

Each kernel is warmed up once (JIT compilation for numba), then timed as the
best of ``--repeat`` runs.  Results of the two backends are compared so a
speedup is never reported for diverging outputs.
"""
import argparse
import time

import numpy as np

from compconj import _backend, kernels
from compconj.grid import Grid


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(size):
    x = np.linspace(-4, 4, size)
    v = np.linspace(-4, 4, size)
    lines = np.abs(np.linspace(-4, 4, 64))[:, None] * x[None, :] ** 2
    small = Grid(((-4.0, 4.0, 41), (-4.0, 4.0, 41)))
    X = small.nodes()
    hb = 0.5 * (X ** 2).sum(axis=1)
    h2 = np.abs(X).sum(axis=1)
    yield "conj_lines 64x%d" % size, lambda: kernels.conj_lines(lines, x, v)
    yield "conj_brute 41^2", lambda: kernels.conj_brute(hb, X, X)
    yield "inf_conv 41^2", lambda: kernels.inf_conv(hb, X, X, h2, small.lo, small.spacing, small.shape)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=801)
    args = ap.parse_args()
    if not _backend.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
    print(f"{'kernel':24s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  max|diff|")
    for name, fn in cases(args.size):
        with _backend.use_backend("numpy"):
            t_np, out_np = best_of(fn, args.repeat)
        if _backend.HAVE_NUMBA:
            with _backend.use_backend("numba"):
                t_nb, out_nb = best_of(fn, args.repeat)
            a, b = np.asarray(out_np[0]), np.asarray(out_nb[0])
            fin = np.isfinite(a) & np.isfinite(b)
            diff = float(np.max(np.abs(a[fin] - b[fin]))) if fin.any() else 0.0
            print(f"{name:24s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}  {diff:.2e}")
        else:
            print(f"{name:24s} {1e3 * t_np:11.2f} {'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
