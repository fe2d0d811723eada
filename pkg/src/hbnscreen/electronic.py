"""Spin-resolved tight-binding Hamiltonian with a mean-field on-site repulsion.

One pi orbital per occupied lattice site. For spin sigma the diagonal is
``onsite(species) + U * (<n_{i,-sigma}> - 1/2)``; bonds carry ``-t(d)`` times
the Bloch phase of the supercell translation they cross.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConvergenceError, FitError, InvalidArgumentError
from .geometry import (LatticeSpec, Supercell, build_supercell, defect_region,
                       neighbor_list, vacancy_neighbors)
from .kspace import HIGH_SYMMETRY, KGrid, KPath, monkhorst_pack, unfold
from .params import TBParams

UP, DOWN = 0, 1
SPINS = (UP, DOWN)
_SORT_DECIMALS = 8  # energies equal to 1e-8 eV count as ties (spin-up fills first)


@dataclass(frozen=True)
class MeanFieldState:
    occupations: np.ndarray  # (n_orbitals, 2): <n_{i,up}>, <n_{i,down}>
    total_energy: float
    iteration: int
    history: tuple = ()      # (energy change, potential residual) per iteration


@dataclass
class EigenSolution:
    kpoints: np.ndarray        # (nk, 2) fractional
    weights: np.ndarray        # (nk,)
    energies: np.ndarray       # (nk, 2, nb), ascending along the last axis
    occupations: np.ndarray    # (nk, 2, nb) in [0, 1]
    fermi_level: float
    electron_count: int
    vectors: np.ndarray | None = None   # (nk, 2, n_orb, nb), columns are states
    positions: np.ndarray | None = None  # (n_orb, 2) orbital positions
    reciprocal: np.ndarray | None = None

    @property
    def n_bands(self) -> int:
        return self.energies.shape[-1]

    def k_index(self, k, tol=1e-9) -> int:
        d = np.abs(self.kpoints - np.asarray(k, dtype=float))
        d = np.minimum(d, 1.0 - d)
        hits = np.nonzero(np.all(d < tol, axis=1))[0]
        if not len(hits):
            raise KeyError(f"k-point {tuple(k)} not in solution")
        return int(hits[0])


class TightBindingModel:
    """Precomputed bond list and bare on-site energies of one supercell."""

    def __init__(self, cell: Supercell, params: TBParams):
        self.cell = cell
        self.params = params
        self.orbital_index = [s.index for s in cell.sites if not s.vacant]
        self.n = len(self.orbital_index)
        local = {site: k for k, site in enumerate(self.orbital_index)}
        self.positions = cell.positions[self.orbital_index] if self.n else np.zeros((0, 2))

        onsite = np.array([params.onsite_of(cell.sites[i].species) for i in self.orbital_index])
        for i in vacancy_neighbors(cell):
            sign = 1.0 if cell.sites[i].sublattice == "N" else -1.0
            onsite[local[i]] += sign * params.dangling_shift
        self.onsite = onsite

        nl = neighbor_list(cell, params.cutoff_ratio * cell.lattice.a0)
        self.bi = np.array([local[i] for i in nl.i], dtype=np.int_)
        self.bj = np.array([local[j] for j in nl.j], dtype=np.int_)
        self.images = nl.image.astype(float)
        self.distance = nl.distance
        self.hop = -params.hopping(nl.distance) if len(nl) else np.zeros(0)
        self.electron_count = cell.electron_count
        self.seed_sites = [local[i] for i in defect_region(cell) if i in local]

    def diagonal(self, occupations: np.ndarray | None, spin: int) -> np.ndarray:
        if occupations is None or self.params.U == 0.0:
            return self.onsite.copy()
        return self.onsite + self.params.U * (occupations[:, 1 - spin] - 0.5)

    def hamiltonians(self, kpts, occupations=None, spin=UP) -> np.ndarray:
        kpts = np.atleast_2d(np.asarray(kpts, dtype=float))
        return kernels.bloch_matrices(self.n, self.diagonal(occupations, spin), self.bi, self.bj,
                                      self.hop, self.images, kpts)

    def diagonalize(self, kpts, occupations=None, vectors=True):
        """Energies (nk, 2, nb) and, optionally, vectors (nk, 2, n, nb)."""
        kpts = np.atleast_2d(np.asarray(kpts, dtype=float))
        nk = len(kpts)
        e = np.empty((nk, 2, self.n))
        v = np.empty((nk, 2, self.n, self.n), dtype=complex) if vectors else None
        spins = SPINS if occupations is not None and self.params.U != 0.0 else (UP,)
        for s in spins:
            H = self.hamiltonians(kpts, occupations, s)
            if vectors:
                e[:, s], v[:, s] = np.linalg.eigh(H)
            else:
                e[:, s] = np.linalg.eigvalsh(H)
        if len(spins) == 1:
            e[:, DOWN] = e[:, UP]
            if vectors:
                v[:, DOWN] = v[:, UP]
        return e, v


def fill_states(energies: np.ndarray, weights: np.ndarray, n_electrons: float):
    """T = 0 filling of the aggregate spectrum.

    States are taken in ascending energy; exact ties (to 1e-8 eV) go spin-up
    first, then by k index and band. Each state holds ``weights[k]`` electrons.
    Returns ``(occupations, fermi_level)``; the Fermi level is the mid-point
    between the last filled and first empty state, or the energy of a
    partially filled state.
    """
    nk, ns, nb = energies.shape
    weights = np.asarray(weights, dtype=float)
    capacity = ns * nb * weights.sum()
    if n_electrons < -1e-9 or n_electrons > capacity + 1e-9:
        raise InvalidArgumentError(f"{n_electrons} electrons do not fit in {capacity:g} states")
    kk, ss, bb = np.meshgrid(np.arange(nk), np.arange(ns), np.arange(nb), indexing="ij")
    live = weights[kk] > 0
    E = np.round(energies[live], _SORT_DECIMALS)
    K, S, B = kk[live], ss[live], bb[live]
    order = np.lexsort((B, K, S, E))
    w = weights[K[order]]
    cum = np.cumsum(w)
    occ_sorted = np.clip((n_electrons - (cum - w)) / w, 0.0, 1.0)
    occ = np.zeros_like(energies)
    occ[K[order], S[order], B[order]] = occ_sorted
    e_sorted = energies[K[order], S[order], B[order]]
    filled = np.nonzero(occ_sorted > 1e-12)[0]
    if len(filled) == 0:
        fermi = float(e_sorted[0])
    else:
        last = filled[-1]
        if occ_sorted[last] < 1.0 - 1e-9 or last + 1 == len(e_sorted):
            fermi = float(e_sorted[last])
        else:
            fermi = 0.5 * float(e_sorted[last] + e_sorted[last + 1])
    # Zero-weight points (e.g. an appended K) follow the Fermi level.
    if not np.all(live):
        dead = ~live
        occ[dead] = (energies[dead] < fermi).astype(float)
    return occ, fermi


def density(weights, occupations, vectors) -> np.ndarray:
    """Site occupations <n_{i,sigma}>, shape (n_orb, 2)."""
    wocc = weights[:, None, None] * occupations
    return np.einsum("ksb,ksib->is", wocc, np.abs(vectors) ** 2)


def _hubbard_energy(U, n_in, n_out, band_energy):
    # <H0> on the output density plus U sum (n_up - 1/2)(n_dn - 1/2).
    h0 = band_energy - U * np.sum((n_in[:, 1] - 0.5) * n_out[:, 0] + (n_in[:, 0] - 0.5) * n_out[:, 1])
    return float(h0 + U * np.sum((n_out[:, 0] - 0.5) * (n_out[:, 1] - 0.5)))


def initial_density(model: TightBindingModel, grid: KGrid, seed: float) -> np.ndarray:
    """Non-interacting density with a spin imbalance ``seed`` on defect sites."""
    e, v = model.diagonalize(grid.points)
    occ, _ = fill_states(e, grid.weights, model.electron_count)
    n = density(grid.weights, occ, v)
    # Spin-symmetric start: average the channels, then tilt the defect sites.
    avg = n.mean(axis=1)
    n = np.column_stack([avg, avg])
    for i in model.seed_sites:
        m = min(seed, 1.0 - n[i, 0], n[i, 1])
        n[i, 0] += m
        n[i, 1] -= m
    return n


def scf_solve(cell: Supercell, params: TBParams, grid: KGrid, *, mixing=0.3, tol=1e-4,
              potential_tol=1e-5, max_iter=500, seed=0.1, initial=None, model=None, patience=20):
    """Linear-mixing fixed point on the site occupations.

    Converged once successive total energies differ by less than ``tol`` (eV)
    and the largest change of the mean-field potential ``U * dn`` is below
    ``potential_tol``, or once the energy criterion alone has held for
    ``patience`` consecutive iterations (occupations flipping between
    degenerate states at the Fermi level never settle the potential). Returns ``(MeanFieldState, EigenSolution)``; the
    solution is the spectrum of the final input potential, so it is
    consistent with ``MeanFieldState.occupations``.
    """
    model = model or TightBindingModel(cell, params)
    if model.electron_count < 0:
        raise InvalidArgumentError("negative electron count")
    U = params.U
    n_in = initial_density(model, grid, seed) if initial is None else np.array(initial, dtype=float)
    history = []
    e_prev = None
    calm = 0
    for it in range(1, max_iter + 1):
        e, v = model.diagonalize(grid.points, n_in)
        occ, fermi = fill_states(e, grid.weights, model.electron_count)
        n_out = density(grid.weights, occ, v)
        band = float(np.sum(grid.weights[:, None, None] * occ * e))
        energy = _hubbard_energy(U, n_in, n_out, band)
        dv = U * float(np.max(np.abs(n_out - n_in))) if model.n else 0.0
        de = abs(energy - e_prev) if e_prev is not None else math.inf
        history.append((de, dv))
        calm = calm + 1 if de < tol else 0
        if dv == 0.0 or (dv < potential_tol and de < tol) or calm >= patience:
            mf = MeanFieldState(n_in, energy, it, tuple(history))
            sol = EigenSolution(grid.points, grid.weights, e, occ, fermi, model.electron_count,
                                v, model.positions, _reciprocal(cell))
            return mf, sol
        e_prev = energy
        n_in = (1.0 - mixing) * n_in + mixing * n_out
    raise ConvergenceError(f"SCF not converged after {max_iter} iterations "
                           f"(last dE={history[-1][0]:.3e} eV, dV={history[-1][1]:.3e} eV)", history)


def _reciprocal(cell: Supercell) -> np.ndarray:
    return 2.0 * np.pi * np.linalg.inv(cell.vectors).T


def solve_frozen(cell: Supercell, params: TBParams, mf: MeanFieldState, grid: KGrid,
                 vectors=False, model=None) -> EigenSolution:
    """Diagonalise on ``grid`` with a fixed mean field (no self-consistency)."""
    model = model or TightBindingModel(cell, params)
    e, v = model.diagonalize(grid.points, mf.occupations, vectors=vectors)
    occ, fermi = fill_states(e, grid.weights, model.electron_count)
    return EigenSolution(grid.points, grid.weights, e, occ, fermi, model.electron_count,
                         v, model.positions, _reciprocal(cell))


def assemble_hamiltonian(cell: Supercell, params: TBParams, k, spin: int,
                         mf: MeanFieldState | None = None) -> np.ndarray:
    """Bloch Hamiltonian at one fractional k-point for ``spin`` (0 up, 1 down)."""
    model = TightBindingModel(cell, params)
    occ = None if mf is None else mf.occupations
    return model.hamiltonians(np.asarray(k, dtype=float)[None, :], occ, spin)[0]


@dataclass(frozen=True)
class BandStructure:
    path: KPath
    energies: np.ndarray  # (n_samples, 2, nb)

    def gap_at(self, label: str, n_electrons_per_spin: int) -> float:
        i = self.path.vertex_index[self.path.labels.index(label)]
        e = self.energies[i, UP]
        return float(e[n_electrons_per_spin] - e[n_electrons_per_spin - 1])


def band_structure(cell: Supercell, params: TBParams, mf: MeanFieldState, path: KPath) -> BandStructure:
    model = TightBindingModel(cell, params)
    e, _ = model.diagonalize(path.points, mf.occupations, vectors=False)
    return BandStructure(path, e)


# --- pristine calibration -------------------------------------------------

def pristine_cell(a0: float = 2.504, strain: float = 0.0) -> Supercell:
    from .geometry import apply_biaxial_strain
    cell = build_supercell(LatticeSpec(a0), 1, 1)
    return apply_biaxial_strain(cell, strain) if strain else cell


def hopping_for_bandwidth(gap: float, bandwidth: float) -> float:
    """Nearest-neighbour t giving valence pi bandwidth ``bandwidth`` at K-gap ``gap``.

    Two-band honeycomb: the valence band spans ``[-sqrt(gap^2/4 + 9 t^2), -gap/2]``
    about mid-gap, so ``bandwidth = sqrt(gap^2/4 + 9 t^2) - gap/2``.
    """
    return math.sqrt(bandwidth * bandwidth + bandwidth * gap) / 3.0


def fit_pristine_params(target_gap: float, target_bandwidth: float, base: TBParams | None = None,
                        U: float | None = None, grid: KGrid | None = None, a0: float = 2.504,
                        tol: float = 1e-10, max_iter: int = 100) -> TBParams:
    """Fit onsite(B) - onsite(N) and t0 to the pristine K-point gap and valence bandwidth.

    With U = 0 the gap at K is exactly onsite(B) - onsite(N). With U > 0 the
    sublattice-resolved mean field shifts the two onsite energies, so the bare
    splitting is corrected by fixed-point iteration on the self-consistent
    primitive cell sampled with ``grid`` (default: the 7x7 supercell 5x5
    Monkhorst-Pack grid unfolded into the primitive zone).
    """
    if not (target_gap >= 0 and target_bandwidth > 0) or not math.isfinite(target_gap + target_bandwidth):
        raise FitError(f"infeasible targets gap={target_gap}, bandwidth={target_bandwidth}")
    if base is None:
        from .params import default_params
        base = default_params()
    if U is not None:
        base = replace(base, U=U)
    t0 = hopping_for_bandwidth(target_gap, target_bandwidth)
    base = replace(base, t0=t0, d0=a0 / math.sqrt(3.0))
    delta = target_gap
    if base.U == 0.0:
        return base.with_onsite(B=0.5 * delta, N=-0.5 * delta)
    grid = grid or unfold(monkhorst_pack(5, 5), 7, 7)
    cell = pristine_cell(a0)
    for _ in range(max_iter):
        trial = base.with_onsite(B=0.5 * delta, N=-0.5 * delta)
        gap = pristine_k_gap(cell, trial, grid)
        err = target_gap - gap
        if abs(err) < tol:
            return trial
        delta += err
    raise FitError(f"gap fit did not converge (residual {err:.3e} eV)")


def pristine_k_gap(cell: Supercell, params: TBParams, grid: KGrid) -> float:
    mf, _ = scf_solve(cell, params, grid, tol=1e-12, potential_tol=1e-12, max_iter=2000)
    model = TightBindingModel(cell, params)
    e, _ = model.diagonalize(HIGH_SYMMETRY["K"][None, :], mf.occupations, vectors=False)
    nocc = model.electron_count // 2
    return float(e[0, UP, nocc] - e[0, UP, nocc - 1])
