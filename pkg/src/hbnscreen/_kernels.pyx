# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``; same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, fabs, sqrt, erf, M_PI

cnp.import_array()


def bloch_matrices(Py_ssize_t n, double[::1] onsite, long[::1] bi, long[::1] bj,
                   double[::1] hop, double[:, ::1] images, double[:, ::1] kpts):
    cdef Py_ssize_t nk = kpts.shape[0], nb = bi.shape[0]
    cdef Py_ssize_t k, b, i
    cdef double arg
    out = np.zeros((nk, n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] h = out
    for k in range(nk):
        for i in range(n):
            h[k, i, i] = onsite[i]
        for b in range(nb):
            arg = 2.0 * M_PI * (kpts[k, 0] * images[b, 0] + kpts[k, 1] * images[b, 1])
            h[k, bi[b], bj[b]] = h[k, bi[b], bj[b]] + hop[b] * (cos(arg) + 1j * sin(arg))
    return out


def gaussian_smear(centers, weights, grid, double sigma, double nsigma=3.0):
    order = np.argsort(np.asarray(centers, dtype=np.float64).ravel())
    cdef double[::1] c = np.ascontiguousarray(np.asarray(centers, dtype=np.float64).ravel()[order])
    cdef double[::1] w = np.ascontiguousarray(np.asarray(weights, dtype=np.float64).ravel()[order])
    cdef double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t ng = g.shape[0], m = c.shape[0], p, q, lo = 0
    cdef double reach = nsigma * sigma, x, acc
    cdef double norm = 1.0 / (sigma * sqrt(2.0 * M_PI) * erf(nsigma / sqrt(2.0)))
    out = np.zeros(ng, dtype=np.float64)
    cdef double[::1] o = out
    # Grid assumed ascending; ``lo`` only moves forward.
    for p in range(ng):
        while lo < m and c[lo] <= g[p] - reach:
            lo += 1
        acc = 0.0
        q = lo
        while q < m and c[q] < g[p] + reach:
            x = (g[p] - c[q]) / sigma
            if fabs(x) < nsigma:
                acc += w[q] * exp(-0.5 * x * x)
            q += 1
        o[p] = norm * acc
    return out
