"""Benchmark the Jacobi sweep kernel: compiled vs. pure-numpy fallback.

Usage: python benchmarks/bench_svd.py [--sizes 64,128,256] [--repeats 3]

Both backends run the identical algorithm, so the outputs are compared
bitwise as a sanity check before timing.
"""

import argparse
import time

import numpy as np

from lamda.kernels import HAVE_NUMBA, jacobi_sweeps_njit, jacobi_sweeps_numpy


def _prepare(n, seed):
    w = np.random.default_rng(seed).normal(size=(2 * n, n))
    at = np.array(w.T, order="C", copy=True)
    vt = np.eye(n)
    return at, vt


def _time(fn, n, repeats):
    best = float("inf")
    for rep in range(repeats):
        at, vt = _prepare(n, seed=rep)
        start = time.perf_counter()
        _, _, converged = fn(at, vt, 1e-12, 60)
        elapsed = time.perf_counter() - start
        assert converged
        best = min(best, elapsed)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="32,64,128,256",
                        help="comma-separated column counts (rows = 2x)")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if not HAVE_NUMBA:
        print("numba is not installed; timing the numpy fallback only")

    if HAVE_NUMBA:
        at, vt = _prepare(16, seed=0)
        jacobi_sweeps_njit(at, vt, 1e-12, 60)  # trigger compilation

        at1, vt1 = _prepare(48, seed=1)
        at2, vt2 = _prepare(48, seed=1)
        jacobi_sweeps_njit(at1, vt1, 1e-12, 60)
        jacobi_sweeps_numpy(at2, vt2, 1e-12, 60)
        assert np.array_equal(at1, at2) and np.array_equal(vt1, vt2), \
            "backends disagree; refusing to benchmark"

    header = f"{'matrix':>12} {'numpy (s)':>12}"
    if HAVE_NUMBA:
        header += f" {'numba (s)':>12} {'speedup':>9}"
    print(header)
    for n in sizes:
        t_np = _time(jacobi_sweeps_numpy, n, args.repeats)
        line = f"{2 * n:>5}x{n:<6} {t_np:>12.4f}"
        if HAVE_NUMBA:
            t_nb = _time(jacobi_sweeps_njit, n, args.repeats)
            line += f" {t_nb:>12.4f} {t_np / t_nb:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
