"""Pure-numpy implementations of the hot kernels (fallback for ``_kernels``)."""
import math

import numpy as np
from scipy import sparse


def bloch_matrices(n, onsite, bi, bj, hop, images, kpts):
    """Stack of Bloch Hamiltonians ``H[k] = diag(onsite) + sum_b hop_b e^{2 pi i k.m_b} |i_b><j_b|``."""
    kpts = np.ascontiguousarray(kpts, dtype=float)
    nk = len(kpts)
    out = np.zeros((nk, n, n), dtype=complex)
    if len(bi):
        phase = np.exp(2j * np.pi * (kpts @ np.asarray(images, dtype=float).T))
        values = phase * np.asarray(hop, dtype=float)[None, :]
        scatter = sparse.csr_matrix(
            (np.ones(len(bi)), (np.arange(len(bi)), np.asarray(bi) * n + np.asarray(bj))),
            shape=(len(bi), n * n))
        out += (scatter.T @ values.T).T.reshape(nk, n, n)
    idx = np.arange(n)
    out[:, idx, idx] += np.asarray(onsite, dtype=float)[None, :]
    return out


def gaussian_smear(centers, weights, grid, sigma, nsigma=3.0):
    """Sum of unit-area Gaussians truncated at ``nsigma`` and renormalised."""
    centers = np.asarray(centers, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi) * math.erf(nsigma / math.sqrt(2.0)))
    out = np.zeros(len(grid))
    order = np.argsort(centers)
    centers, weights = centers[order], weights[order]
    reach = nsigma * sigma
    # Chunk over the grid so memory stays O(chunk * states in window).
    for start in range(0, len(grid), 256):
        g = grid[start:start + 256]
        lo = np.searchsorted(centers, g[0] - reach, side="left")
        hi = np.searchsorted(centers, g[-1] + reach, side="right")
        if hi <= lo:
            continue
        x = (g[:, None] - centers[None, lo:hi]) / sigma
        k = np.where(np.abs(x) < nsigma, np.exp(-0.5 * x * x), 0.0)
        out[start:start + 256] = norm * (k @ weights[lo:hi])
    return out
