import os
import subprocess
import sys

import numpy as np

from lamda import kernels


def _run_both(seed, shape):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=shape)

    def run(fn):
        at = np.array(w.T, order="C", copy=True)
        vt = np.eye(at.shape[0])
        sweeps, worst, converged = fn(at, vt, 1e-12, 60)
        return at, vt, sweeps, converged

    return run(kernels.jacobi_sweeps_numpy), run(kernels.jacobi_sweeps_njit)


def test_numpy_and_njit_agree_bitwise():
    for seed, shape in ((0, (12, 8)), (1, (8, 8)), (2, (40, 16))):
        (at_np, vt_np, sweeps_np, ok_np), (at_nb, vt_nb, sweeps_nb, ok_nb) = _run_both(seed, shape)
        assert ok_np and ok_nb
        assert sweeps_np == sweeps_nb
        assert np.array_equal(at_np, at_nb)
        assert np.array_equal(vt_np, vt_nb)


def test_kernel_orthogonalizes_rows():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(20, 10))
    at = np.array(w.T, order="C", copy=True)
    vt = np.eye(10)
    _, worst, converged = kernels.jacobi_sweeps_numpy(at, vt, 1e-12, 60)
    assert converged and worst <= 1e-12
    gram = at @ at.T
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() <= 1e-10 * np.abs(np.diag(gram)).max()
    assert np.abs(vt @ vt.T - np.eye(10)).max() <= 1e-12


def test_env_flag_selects_numpy_fallback():
    code = (
        "from lamda import kernels; "
        "assert kernels.jacobi_sweeps is kernels.jacobi_sweeps_numpy, 'flag ignored'; "
        "assert not kernels.USING_NUMBA"
    )
    env = dict(os.environ, LDA_NO_NUMBA="1")
    subprocess.run([sys.executable, "-c", code], check=True, env=env)


def test_default_uses_numba_when_available():
    if not kernels.HAVE_NUMBA:
        return
    env = {k: v for k, v in os.environ.items() if k != "LDA_NO_NUMBA"}
    code = (
        "from lamda import kernels; "
        "assert kernels.USING_NUMBA; "
        "assert kernels.jacobi_sweeps is kernels.jacobi_sweeps_njit"
    )
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
