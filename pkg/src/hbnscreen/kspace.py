"""Brillouin-zone sampling: Monkhorst-Pack and Gamma-centred grids, and the
Gamma-M-K-Gamma path of the hexagonal zone.

All k-points are fractional coordinates in the reciprocal basis of whatever
cell they are used with.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

HIGH_SYMMETRY = {
    "G": np.array([0.0, 0.0]),
    "M": np.array([0.5, 0.0]),
    "K": np.array([1.0 / 3.0, 1.0 / 3.0]),
}


@dataclass(frozen=True)
class KGrid:
    points: np.ndarray   # (nk, 2)
    weights: np.ndarray  # (nk,)

    def __len__(self):
        return len(self.weights)

    def with_extra(self, extra) -> "KGrid":
        """Append zero-weight points (e.g. K) that should be diagonalised too."""
        extra = np.atleast_2d(np.asarray(extra, dtype=float))
        return KGrid(np.vstack([self.points, extra]),
                     np.concatenate([self.weights, np.zeros(len(extra))]))


def _wrap(x):
    # Map into [-0.5, 0.5); round first so -0.5 + 1e-17 style noise is stable.
    y = np.round(x, 14)
    return y - np.floor(y + 0.5)


def _check(n1, n2):
    if int(n1) != n1 or int(n2) != n2 or n1 < 1 or n2 < 1:
        raise InvalidArgumentError(f"grid sizes must be positive integers, got {n1}x{n2}")


def monkhorst_pack(n1: int, n2: int) -> KGrid:
    """Points ``(2i - n - 1) / (2n)``, i = 1..n, along each reciprocal axis."""
    _check(n1, n2)
    u1 = (2.0 * np.arange(1, n1 + 1) - n1 - 1) / (2.0 * n1)
    u2 = (2.0 * np.arange(1, n2 + 1) - n2 - 1) / (2.0 * n2)
    pts = np.array([(a, b) for a in u1 for b in u2])
    return KGrid(_wrap(pts), np.full(n1 * n2, 1.0 / (n1 * n2)))


def gamma_centered(n1: int, n2: int) -> KGrid:
    _check(n1, n2)
    pts = np.array([(i / n1, j / n2) for i in range(n1) for j in range(n2)])
    return KGrid(_wrap(pts), np.full(n1 * n2, 1.0 / (n1 * n2)))


def unfold(grid: KGrid, n1: int, n2: int) -> KGrid:
    """Express a supercell grid in the primitive-cell reciprocal basis.

    A supercell point k maps to the n1*n2 primitive points ``(k + j) / n``;
    band energies of a pristine supercell on ``grid`` equal those of the
    primitive cell on the returned grid.
    """
    shifts = np.array([(j1, j2) for j1 in range(n1) for j2 in range(n2)], dtype=float)
    pts = (grid.points[:, None, :] + shifts[None, :, :]) / np.array([n1, n2], dtype=float)
    w = np.repeat(grid.weights / (n1 * n2), n1 * n2)
    return KGrid(_wrap(pts.reshape(-1, 2)), w)


def cartesian(points, reciprocal: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=float) @ reciprocal


@dataclass(frozen=True)
class KPath:
    labels: tuple
    vertices: np.ndarray      # (nv, 2) fractional
    points: np.ndarray        # (ns, 2) fractional samples
    distance: np.ndarray      # cumulative length (1/Angstrom)
    vertex_index: tuple       # sample index of each vertex

    def __len__(self):
        return len(self.points)


def high_symmetry_path(resolution: int, reciprocal: np.ndarray | None = None,
                       labels=("G", "M", "K", "G")) -> KPath:
    """Sample ``labels`` with ``resolution`` points per segment (vertices shared).

    ``reciprocal`` rows are b1, b2; path length is measured with them. Without
    it a unit primitive lattice (a0 = 1) is assumed.
    """
    if int(resolution) != resolution or resolution < 2:
        raise InvalidArgumentError("resolution must be an integer >= 2")
    if reciprocal is None:
        from .geometry import LatticeSpec
        reciprocal = LatticeSpec(1.0).reciprocal()
    verts = np.array([HIGH_SYMMETRY[l] for l in labels])
    pts = [verts[0]]
    vidx = [0]
    for a, b in zip(verts[:-1], verts[1:]):
        for t in np.linspace(0.0, 1.0, resolution)[1:]:
            pts.append(a + t * (b - a))
        vidx.append(len(pts) - 1)
    pts = np.array(pts)
    # Exact vertex coordinates at the shared samples.
    for v, i in zip(verts, vidx):
        pts[i] = v
    steps = np.linalg.norm(np.diff(cartesian(pts, reciprocal), axis=0), axis=1)
    dist = np.concatenate([[0.0], np.cumsum(steps)])
    return KPath(tuple(labels), verts, pts, dist, tuple(vidx))


def nearest_label(k, reciprocal: np.ndarray, tol: float = 0.05) -> str:
    """Name of the high-symmetry point (modulo reciprocal lattice) nearest ``k``."""
    k = np.asarray(k, dtype=float)
    best = None
    b_norm = np.linalg.norm(reciprocal[0])
    for name, v in (("G", HIGH_SYMMETRY["G"]), ("M", HIGH_SYMMETRY["M"]),
                    ("K", HIGH_SYMMETRY["K"]), ("K", -HIGH_SYMMETRY["K"]),
                    ("M", np.array([0.0, 0.5])), ("M", np.array([0.5, -0.5]))):
        for g1 in (-1, 0, 1):
            for g2 in (-1, 0, 1):
                d = np.linalg.norm(cartesian(k - v - np.array([g1, g2]), reciprocal))
                if best is None or d < best[0]:
                    best = (d, name)
    if best[0] <= tol * b_norm:
        return best[1]
    return f"({k[0]:.4f},{k[1]:.4f})"
