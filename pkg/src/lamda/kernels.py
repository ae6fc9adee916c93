"""Hot numeric kernels.

The one-sided Jacobi sweep dominates SVD runtime, so it is compiled with
numba when available. Set LDA_NO_NUMBA=1 to force the pure-numpy path
(same code, uncompiled); `benchmarks/bench_svd.py` compares the two.

Both kernels operate on the *transposed* factor matrices so that every
column access is a contiguous row (`at[p]`), which keeps the numba dot
products on the BLAS fast path and the numpy fallback vectorized.
"""

import math
import os

import numpy as np

_TINY = 1e-300


def _jacobi_sweeps(at, vt, tol, max_sweeps):
    """Orthogonalize the rows of `at` in place via Jacobi rotations.

    `at` is the n x m transpose of the working matrix (rows = original
    columns), `vt` the n x n transpose of the accumulated rotation
    product. Returns (sweeps_used, worst_rel_offdiag_seen_last_sweep,
    converged). A pair (p, q) counts as converged when
    |<a_p, a_q>| / (|a_p| * |a_q|) <= tol.
    """
    n = at.shape[0]
    worst = 0.0
    for sweep in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = np.dot(at[p], at[p])
                aqq = np.dot(at[q], at[q])
                apq = np.dot(at[p], at[q])
                denom = math.sqrt(app * aqq)
                if denom <= _TINY:
                    continue
                rel = abs(apq) / denom
                if rel > worst:
                    worst = rel
                if rel <= tol:
                    continue
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * at[p] - s * at[q]
                at[q] = s * at[p] + c * at[q]
                at[p] = new_p
                new_vp = c * vt[p] - s * vt[q]
                vt[q] = s * vt[p] + c * vt[q]
                vt[p] = new_vp
        if worst <= tol:
            return sweep + 1, worst, True
    return max_sweeps, worst, False


def _numba_disabled():
    return os.environ.get("LDA_NO_NUMBA", "") not in ("", "0")


try:
    from numba import njit

    jacobi_sweeps_njit = njit(cache=True, nogil=True)(_jacobi_sweeps)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    jacobi_sweeps_njit = None
    HAVE_NUMBA = False

jacobi_sweeps_numpy = _jacobi_sweeps

if HAVE_NUMBA and not _numba_disabled():
    USING_NUMBA = True
    jacobi_sweeps = jacobi_sweeps_njit
else:
    USING_NUMBA = False
    jacobi_sweeps = jacobi_sweeps_numpy
