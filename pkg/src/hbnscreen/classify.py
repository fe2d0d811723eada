"""Selection criteria: gap-interior levels, depth, and the first-order transition.

A defect level is a band (per spin channel) whose grid-averaged energy lies
strictly inside the pristine gap. Up and down levels closer than the
degeneracy threshold with equal occupation merge into one level labelled
``"degenerate"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .electronic import EigenSolution
from .errors import InvalidArgumentError, NoGapError
from .kspace import nearest_label
from .catalog import ev_to_nm
from .spectra import AbsorptionSpectrum

EDGE_MARGIN = 0.5
FLAT_TOL = 0.1
DEGENERACY_TOL = 1e-3
HISTOGRAM_BIN = 0.25
TYPES = ("radiative", "non-radiative", "degenerate")
SPIN_LABELS = ("up", "down")


@dataclass(frozen=True)
class BandGap:
    vbm: float
    cbm: float
    gap: float
    direct_at: str
    direct_gap: float
    k_point: tuple


def _filled_per_spin(solution: EigenSolution) -> list[int]:
    counts = []
    for s in (0, 1):
        n = float(np.sum(solution.weights[:, None] * solution.occupations[:, s]))
        if abs(n - round(n)) > 1e-6:
            raise NoGapError(f"spin channel {s} is partially filled ({n:.6f} states)")
        counts.append(int(round(n)))
    return counts


def find_gap(reference: EigenSolution) -> BandGap:
    """Band edges of an insulating reference solution.

    VBM and CBM come from band indices fixed by the per-spin filling, so
    zero-weight points appended to the grid (such as K) count as well.
    """
    filled = _filled_per_spin(reference)
    e = reference.energies
    nb = e.shape[-1]
    vb = [e[:, s, filled[s] - 1] for s in (0, 1) if filled[s] > 0]
    cb = [e[:, s, filled[s]] for s in (0, 1) if filled[s] < nb]
    if not vb or not cb:
        raise NoGapError("reference has no valence or no conduction band")
    vbm = max(float(v.max()) for v in vb)
    cbm = min(float(c.min()) for c in cb)
    if cbm - vbm <= 1e-6:
        raise NoGapError(f"no gap: vbm={vbm:.6f} eV, cbm={cbm:.6f} eV")
    s = int(np.argmax([filled[0], filled[1]]))
    direct = e[:, s, filled[s]] - e[:, s, filled[s] - 1]
    k = int(np.argmin(direct))
    label = nearest_label(reference.kpoints[k], reference.reciprocal) if reference.reciprocal is not None else ""
    return BandGap(vbm, cbm, cbm - vbm, label, float(direct[k]), tuple(reference.kpoints[k]))


@dataclass(frozen=True)
class DefectLevel:
    energy: float
    spin: str             # "up", "down" or "degenerate"
    occupied: bool
    bandwidth: float
    depth: str = "deep"
    states: tuple = ()    # ((spin index, band index), ...)
    gamma_energy: float = math.nan

    @property
    def degenerate(self) -> bool:
        return self.spin == "degenerate"


def classify_depth(level: DefectLevel, gap: BandGap, edge_margin: float = EDGE_MARGIN,
                   flat_tol: float = FLAT_TOL) -> str:
    distance = min(level.energy - gap.vbm, gap.cbm - level.energy)
    return "deep" if distance >= edge_margin and level.bandwidth <= flat_tol else "shallow"


def extract_defect_levels(solution: EigenSolution, gap: BandGap, edge_margin: float = EDGE_MARGIN,
                          flat_tol: float = FLAT_TOL, degeneracy_tol: float = DEGENERACY_TOL) -> list[DefectLevel]:
    """Gap-interior bands of ``solution`` (which should sample a dense grid)."""
    live = solution.weights > 0
    w = solution.weights[live] / solution.weights[live].sum()
    e = solution.energies[live]
    occ = solution.occupations[live]
    try:
        g = solution.k_index((0.0, 0.0))
    except KeyError:
        g = None
    raw = []
    for s in (0, 1):
        avg = w @ e[:, s]
        filling = w @ occ[:, s]
        for b in np.nonzero((avg > gap.vbm) & (avg < gap.cbm))[0]:
            raw.append(dict(energy=float(avg[b]), spin=s, band=int(b), occupied=bool(filling[b] >= 0.5),
                            bandwidth=float(e[:, s, b].max() - e[:, s, b].min()),
                            gamma=float(solution.energies[g, s, b]) if g is not None else math.nan))
    raw.sort(key=lambda r: (r["energy"], r["spin"], r["band"]))
    used = set()
    levels = []
    for i, r in enumerate(raw):
        if i in used:
            continue
        partner = None
        for j in range(i + 1, len(raw)):
            q = raw[j]
            if q["energy"] - r["energy"] > degeneracy_tol:
                break
            if j not in used and q["spin"] != r["spin"] and q["occupied"] == r["occupied"]:
                partner = j
                break
        group = [r] if partner is None else [r, raw[partner]]
        if partner is not None:
            used.add(partner)
        level = DefectLevel(
            energy=float(np.mean([x["energy"] for x in group])),
            spin="degenerate" if partner is not None else SPIN_LABELS[r["spin"]],
            occupied=r["occupied"],
            bandwidth=max(x["bandwidth"] for x in group),
            states=tuple((x["spin"], x["band"]) for x in group),
            gamma_energy=float(np.mean([x["gamma"] for x in group])),
        )
        levels.append(_with_depth(level, gap, edge_margin, flat_tol))
    return levels


def _with_depth(level, gap, edge_margin, flat_tol):
    return replace(level, depth=classify_depth(level, gap, edge_margin, flat_tol))


@dataclass(frozen=True)
class TransitionRecord:
    defect_name: str
    charge: int
    energy: float
    wavelength: float
    type: str
    deep: bool
    ground_level: DefectLevel | None   # None: ground state is the VBM
    excited_level: DefectLevel
    vb_ground: bool = False
    gamma_energy: float = math.nan
    peak: tuple | None = None
    extra: dict = field(default_factory=dict)


def _top_valence(spectrum: AbsorptionSpectrum, solution_levels, spin: int, gap: BandGap) -> int | None:
    e = spectrum.gamma_energies[spin]
    gap_bands = {b for lv in solution_levels for (s, b) in lv.states if s == spin}
    below = [b for b in range(len(e)) if b not in gap_bands and e[b] <= gap.vbm + 1e-9]
    return max(below) if below else None


def first_order_transition(levels: list[DefectLevel], spectrum: AbsorptionSpectrum, defect_name: str,
                           charge: int, gap: BandGap | None = None,
                           degeneracy_tol: float = DEGENERACY_TOL) -> TransitionRecord | None:
    """Highest occupied -> lowest unoccupied defect level.

    Without an occupied gap level the ground state is the VBM (needs ``gap``).
    The transition is radiative when the ground -> excited pairs at Gamma have
    a characteristic epsilon2 peak within one photon-grid spacing of their
    Gamma energy difference, and the pairs' own contribution clears the floor.
    A radiative transition whose ground state is a tie of several occupied
    levels (within ``degeneracy_tol``) is typed ``"degenerate"``.
    """
    empty = [lv for lv in levels if not lv.occupied]
    if not empty:
        return None
    excited = min(empty, key=lambda lv: lv.energy)
    filled = [lv for lv in levels if lv.occupied and lv.energy < excited.energy]
    ground = max(filled, key=lambda lv: lv.energy) if filled else None
    ground_tie = bool(ground) and sum(1 for lv in filled if ground.energy - lv.energy <= degeneracy_tol) > 1

    if ground is None:
        if gap is None:
            raise InvalidArgumentError("VBM-referenced transition needs the pristine gap")
        energy = excited.energy - gap.vbm
        pairs = []
        for s, b in excited.states:
            top = _top_valence(spectrum, levels, s, gap)
            if top is not None:
                pairs.append((s, top, b))
    else:
        ties = [lv for lv in filled if ground.energy - lv.energy <= degeneracy_tol] if ground_tie else [ground]
        energy = excited.energy - ground.energy
        pairs = [(s, b0, b1) for lv in ties for (s, b0) in lv.states
                 for (s1, b1) in excited.states if s1 == s]
    if not energy > 0:
        return None

    peak = None
    own = 0.0
    e_gamma = math.nan
    if pairs:
        e_gamma = float(np.mean([spectrum.gamma_energies[s, f] - spectrum.gamma_energies[s, i] for s, i, f in pairs]))
        own = sum(spectrum.pair_height(s, i, f) for s, i, f in pairs)
        peak = spectrum.peak_near(e_gamma)
    radiative = peak is not None and own >= spectrum.floor and own > 0
    # Spin-degenerate (closed-shell) levels are ordinary; the degenerate type
    # needs two or more distinct occupied levels tied for the ground state.
    degenerate = ground_tie
    if not radiative:
        kind = "non-radiative"
    elif degenerate:
        kind = "degenerate"
    else:
        kind = "radiative"
    deep = ground is not None and ground.depth == "deep" and excited.depth == "deep"
    return TransitionRecord(defect_name, int(charge), float(energy), ev_to_nm(energy), kind, deep,
                            ground, excited, ground is None, e_gamma, peak)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: dict  # type -> counts per bin

    @property
    def total(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts.values()))


def _energy_of(record) -> float:
    return float(record.energy if hasattr(record, "energy") else record.transition_ev)


def histogram(records, bin: float = HISTOGRAM_BIN, emax: float | None = None) -> Histogram:
    """Per-type counts of transition energies in bins ``[i*bin, (i+1)*bin)``."""
    if not bin > 0:
        raise InvalidArgumentError(f"bin width must be positive, got {bin}")
    records = [r for r in records if r is not None]
    energies = [_energy_of(r) for r in records]
    top = max(energies + [emax or 0.0, bin])
    nbins = int(math.floor(top / bin)) + 1
    edges = np.arange(nbins + 1) * bin
    counts = {t: np.zeros(nbins, dtype=int) for t in TYPES}
    for r, e in zip(records, energies):
        if r.type not in counts:
            raise InvalidArgumentError(f"unknown transition type {r.type!r}")
        counts[r.type][min(int(math.floor(e / bin)), nbins - 1)] += 1
    return Histogram(edges, counts)
