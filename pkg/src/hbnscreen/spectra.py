"""Density of states and the imaginary dielectric function.

Transition dipoles are taken at Gamma only, with orbital positions measured
from the defect centroid. ``epsilon2`` is in arbitrary units: a Gaussian of
unit area per occupied-to-empty pair, scaled by ``|<f|r|i>|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .electronic import EigenSolution
from .errors import InvalidArgumentError
from .geometry import Supercell

DEFAULT_SIGMA = 0.05
PHOTON_STEP = 0.01
PHOTON_MAX = 6.5
PEAK_FLOOR = 1e-3  # fraction of the pristine reference maximum


def photon_grid(emax: float = PHOTON_MAX, step: float = PHOTON_STEP) -> np.ndarray:
    n = int(round(emax / step))
    return np.round(np.arange(n + 1) * step, 10)


@dataclass(frozen=True)
class DosCurve:
    energies: np.ndarray
    values: np.ndarray  # (2, n_energies): states/eV per spin channel
    broadening: float

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def integral(self) -> np.ndarray:
        """Trapezoid integral per spin channel."""
        return np.trapezoid(self.values, self.energies, axis=-1)


def dos(solution: EigenSolution, grid, sigma: float = DEFAULT_SIGMA) -> DosCurve:
    """Gaussian-broadened, k-weighted density of states per spin channel."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    grid = np.asarray(grid, dtype=float)
    w = np.broadcast_to(solution.weights[:, None], solution.energies[:, 0].shape)
    values = np.vstack([
        kernels.gaussian_smear(solution.energies[:, s].ravel(), w.ravel(), grid, sigma)
        for s in (0, 1)
    ])
    return DosCurve(grid, values, float(sigma))


def dipole_matrix(vectors: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """``|<f|r|i>|^2`` summed over x and y for column eigenvectors.

    ``vectors`` is (n_orbitals, n_states); ``positions`` (n_orbitals, 2) in
    Angstrom. Returns a symmetric (n_states, n_states) array in Angstrom^2.
    """
    vectors = np.asarray(vectors)
    out = np.zeros((vectors.shape[1], vectors.shape[1]))
    for axis in range(positions.shape[1]):
        m = vectors.conj().T @ (positions[:, axis:axis + 1] * vectors)
        out += np.abs(m) ** 2
    return 0.5 * (out + out.T)


def dipole_elements(solution: EigenSolution, cell: Supercell, origin=None) -> np.ndarray:
    """Gamma-point dipole matrices, shape (2, nb, nb), one per spin channel."""
    if solution.vectors is None:
        raise InvalidArgumentError("solution carries no eigenvectors")
    g = solution.k_index((0.0, 0.0))
    origin = cell.defect_centroid() if origin is None else np.asarray(origin, dtype=float)
    r = solution.positions - origin
    return np.stack([dipole_matrix(solution.vectors[g, s], r) for s in (0, 1)])


@dataclass(frozen=True)
class AbsorptionSpectrum:
    photon_energies: np.ndarray
    epsilon2: np.ndarray
    peaks: tuple            # ((energy, height), ...)
    floor: float
    broadening: float
    gamma_energies: np.ndarray  # (2, nb) eigenvalues at Gamma
    strength: np.ndarray        # (2, nb, nb) |d|^2 * f_i * (1 - f_f), row = initial

    @property
    def spacing(self) -> float:
        return float(self.photon_energies[1] - self.photon_energies[0])

    def peak_near(self, energy: float, tol: float | None = None):
        """Highest peak within ``tol`` (default one grid spacing) of ``energy``."""
        tol = self.spacing * (1 + 1e-9) if tol is None else tol
        near = [p for p in self.peaks if abs(p[0] - energy) <= tol]
        return max(near, key=lambda p: p[1]) if near else None

    def pair_height(self, spin: int, initial: int, final: int) -> float:
        """Peak height contributed by one pair on its own."""
        norm = self.broadening * math.sqrt(2 * math.pi) * math.erf(3.0 / math.sqrt(2.0))
        return float(self.strength[spin, initial, final]) / norm


def find_peaks(x: np.ndarray, y: np.ndarray, floor: float) -> tuple:
    """Local maxima of ``y`` at or above ``floor`` (plateaus report their left edge)."""
    out = []
    n = len(y)
    for i in range(n):
        if y[i] < floor or y[i] <= 0:
            continue
        left = y[i - 1] if i > 0 else -np.inf
        j = i
        while j + 1 < n and y[j + 1] == y[i]:
            j += 1
        right = y[j + 1] if j + 1 < n else -np.inf
        if y[i] > left and y[i] > right and (i == 0 or y[i - 1] != y[i]):
            out.append((float(x[i]), float(y[i])))
    return tuple(out)


def epsilon2(solution: EigenSolution, dipoles: np.ndarray, grid=None, sigma: float = DEFAULT_SIGMA,
             reference_max: float | None = None, floor_ratio: float = PEAK_FLOOR) -> AbsorptionSpectrum:
    """Broadened sum over same-spin occupied -> empty pairs at Gamma.

    The peak floor is ``floor_ratio`` times ``reference_max`` (the maximum of
    a pristine reference spectrum) or, without a reference, of this
    spectrum's own maximum.
    """
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    grid = photon_grid() if grid is None else np.asarray(grid, dtype=float)
    g = solution.k_index((0.0, 0.0))
    e = solution.energies[g]
    f = solution.occupations[g]
    strength = dipoles * f[:, :, None] * (1.0 - f[:, None, :])
    centers, weights = [], []
    for s in (0, 1):
        de = e[s][None, :] - e[s][:, None]
        mask = (strength[s] > 0) & (de > 0)
        centers.append(de[mask])
        weights.append(strength[s][mask])
    centers = np.concatenate(centers)
    weights = np.concatenate(weights)
    eps = kernels.gaussian_smear(centers, weights, grid, sigma) if len(centers) else np.zeros_like(grid)
    ref = float(eps.max()) if reference_max is None else float(reference_max)
    floor = floor_ratio * ref
    peaks = find_peaks(grid, eps, floor) if ref > 0 else ()
    return AbsorptionSpectrum(grid, eps, peaks, floor, float(sigma), e.copy(), strength)
