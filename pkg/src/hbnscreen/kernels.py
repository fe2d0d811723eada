"""Kernel dispatch: compiled Cython core when built, numpy fallback otherwise.

Set ``HBNSCREEN_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("HBNSCREEN_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def bloch_matrices(n, onsite, bi, bj, hop, images, kpts, backend=None):
    impl = _pick(backend)
    if impl is _compiled:
        return impl.bloch_matrices(
            int(n), np.ascontiguousarray(onsite, dtype=np.float64),
            np.ascontiguousarray(bi, dtype=np.int_), np.ascontiguousarray(bj, dtype=np.int_),
            np.ascontiguousarray(hop, dtype=np.float64),
            np.ascontiguousarray(images, dtype=np.float64).reshape(-1, 2),
            np.ascontiguousarray(kpts, dtype=np.float64).reshape(-1, 2))
    return impl.bloch_matrices(n, onsite, bi, bj, hop, images, kpts)


def gaussian_smear(centers, weights, grid, sigma, nsigma=3.0, backend=None):
    grid = np.asarray(grid, dtype=float)
    if len(grid) > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("energy grid must be ascending")
    return _pick(backend).gaussian_smear(centers, weights, grid, float(sigma), float(nsigma))


def _pick(backend):
    if backend is None:
        return _compiled if _compiled is not None else _kernels_py
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
