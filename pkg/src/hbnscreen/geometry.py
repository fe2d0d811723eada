"""Honeycomb supercells, point-defect edits and biaxial strain.

Lattice vectors use the 120 degree convention, ``v1 = a0 (1, 0)`` and
``v2 = a0 (-1/2, sqrt(3)/2)``, with B at the origin of each primitive cell and
N at ``(2 v1 + v2) / 3``. With this choice the K point sits at fractional
reciprocal coordinates (1/3, 1/3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import DefectConflictError, InvalidArgumentError, ParseError, UnknownSpeciesError
from .params import DEFAULT_PI_ELECTRONS

VACANT = "VACANT"
SUBLATTICES = ("B", "N")


@dataclass(frozen=True)
class LatticeSpec:
    a0: float = 2.504

    def __post_init__(self):
        if not self.a0 > 0:
            raise InvalidArgumentError(f"lattice constant must be positive, got {self.a0}")

    @property
    def v1(self) -> np.ndarray:
        return np.array([self.a0, 0.0])

    @property
    def v2(self) -> np.ndarray:
        return np.array([-0.5 * self.a0, 0.5 * math.sqrt(3.0) * self.a0])

    @property
    def vectors(self) -> np.ndarray:
        return np.vstack([self.v1, self.v2])

    @property
    def bond_length(self) -> float:
        return self.a0 / math.sqrt(3.0)

    def reciprocal(self) -> np.ndarray:
        """Rows b1, b2 with ``b_i . v_j = 2 pi delta_ij``."""
        return 2.0 * np.pi * np.linalg.inv(self.vectors).T


@dataclass(frozen=True)
class Site:
    index: int
    species: str
    position: tuple[float, float]
    pi_electrons: int
    sublattice: str  # "B", "N" or "i" (interstitial)

    @property
    def vacant(self) -> bool:
        return self.species == VACANT


# --- defect edits ---------------------------------------------------------

SiteLabel = Union[str, int]


@dataclass(frozen=True)
class Substitution:
    site: SiteLabel
    species: str

    def token(self) -> str:
        return f"{self.species}{_label_token(self.site)}"


@dataclass(frozen=True)
class Vacancy:
    site: SiteLabel

    def token(self) -> str:
        return f"V{_label_token(self.site)}"


@dataclass(frozen=True)
class Interstitial:
    cluster: str
    species: str

    def token(self) -> str:
        return f"{self.species}{self.cluster[1:]}"


Edit = Union[Substitution, Vacancy, Interstitial]


def _label_token(label: SiteLabel) -> str:
    return label if isinstance(label, str) else f"#{label}"


@dataclass(frozen=True)
class DefectSpec:
    edits: tuple
    charge: int = 0

    def __post_init__(self):
        object.__setattr__(self, "edits", tuple(self.edits))
        if self.charge not in (-1, 0, 1):
            raise InvalidArgumentError(f"charge must be -1, 0 or +1, got {self.charge}")
        if not self.edits:
            raise InvalidArgumentError("a defect needs at least one edit")

    @property
    def base_name(self) -> str:
        return "-".join(e.token() for e in self.edits)

    @property
    def name(self) -> str:
        if self.charge == 0:
            return self.base_name
        return f"{self.base_name}({self.charge:+d})"


@dataclass(frozen=True)
class StrainState:
    s: float
    L0: float
    dL: float

    @classmethod
    def from_lengths(cls, dL: float, L0: float) -> "StrainState":
        return cls(strain_of(dL, L0), L0, dL)


def strain_of(dL: float, L0: float) -> float:
    if not L0 > 0:
        raise InvalidArgumentError("unstrained length must be positive")
    return dL / L0


@dataclass(frozen=True)
class Supercell:
    lattice: LatticeSpec  # current (strained) lattice
    n1: int
    n2: int
    sites: tuple
    strain: float = 0.0
    defect: DefectSpec | None = None
    edited: tuple = ()
    vacancies: tuple = field(default=())

    @property
    def vectors(self) -> np.ndarray:
        """Supercell lattice vectors as rows."""
        return np.vstack([self.n1 * self.lattice.v1, self.n2 * self.lattice.v2])

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sites], dtype=float)

    @property
    def orbital_sites(self) -> list[Site]:
        return [s for s in self.sites if not s.vacant]

    @property
    def charge(self) -> int:
        return self.defect.charge if self.defect is not None else 0

    @property
    def electron_count(self) -> int:
        return sum(s.pi_electrons for s in self.sites) - self.charge

    @property
    def unstrained_a0(self) -> float:
        return self.lattice.a0 / (1.0 + self.strain)

    @property
    def strain_state(self) -> StrainState:
        L0 = self.unstrained_a0
        return StrainState(self.strain, L0, self.lattice.a0 - L0)

    def centroid(self) -> np.ndarray:
        lattice_sites = [s for s in self.sites if s.sublattice in SUBLATTICES]
        return np.mean([s.position for s in lattice_sites], axis=0)

    def defect_centroid(self) -> np.ndarray:
        if not self.edited:
            return self.centroid()
        return np.mean([self.sites[i].position for i in self.edited], axis=0)


def build_supercell(lattice: LatticeSpec, n1: int, n2: int,
                    pi_electrons: Mapping[str, int] | None = None) -> Supercell:
    """Pristine ``n1 x n2`` hBN supercell, sites ordered cell-major (B then N)."""
    if int(n1) != n1 or int(n2) != n2 or n1 < 1 or n2 < 1:
        raise InvalidArgumentError(f"supercell multipliers must be positive integers, got {n1}x{n2}")
    table = DEFAULT_PI_ELECTRONS if pi_electrons is None else pi_electrons
    v1, v2 = lattice.v1, lattice.v2
    tau_n = (2.0 * v1 + v2) / 3.0
    sites = []
    for i1 in range(n1):
        for i2 in range(n2):
            origin = i1 * v1 + i2 * v2
            for sub, offset in (("B", 0.0), ("N", tau_n)):
                pos = origin + offset
                sites.append(Site(len(sites), sub, (float(pos[0]), float(pos[1])),
                                  int(table[sub]), sub))
    return Supercell(lattice, int(n1), int(n2), tuple(sites))


def _resolve(cell: Supercell, sites: list[Site], label: SiteLabel, edited: list[int]) -> int:
    if isinstance(label, int):
        if not 0 <= label < len(sites) or sites[label].sublattice not in SUBLATTICES:
            raise InvalidArgumentError(f"no lattice site with index {label}")
        if sites[label].vacant or label in edited:
            raise DefectConflictError(f"site {label} is already vacant or edited")
        return label
    if label not in SUBLATTICES:
        raise InvalidArgumentError(f"site label must be 'B', 'N' or an index, got {label!r}")
    center = cell.centroid()
    ref = center if not edited else np.mean([sites[i].position for i in edited], axis=0)
    best = None
    for s in sites:
        if s.sublattice != label or s.vacant or s.index in edited or s.index in cell.edited:
            continue
        p = np.asarray(s.position)
        key = (round(float(np.linalg.norm(p - ref)), 9), round(float(np.linalg.norm(p - center)), 9), s.index)
        if best is None or key < best[0]:
            best = (key, s.index)
    if best is None:
        raise DefectConflictError(f"no free {label} site left to edit")
    return best[1]


def apply_defect(cell: Supercell, spec: DefectSpec,
                 pi_electrons: Mapping[str, int] | None = None) -> Supercell:
    """Apply the edits of ``spec`` to sites nearest the supercell centre.

    The first edit takes the site of the requested sublattice nearest the
    centroid; later edits take the free site nearest the centroid of the
    sites edited so far, so multi-site complexes are compact.
    """
    if cell.defect is not None:
        raise DefectConflictError(f"cell already carries defect {cell.defect.name}")
    table = DEFAULT_PI_ELECTRONS if pi_electrons is None else pi_electrons
    sites = list(cell.sites)
    edited: list[int] = []
    vacancies: list[int] = []
    for edit in spec.edits:
        if isinstance(edit, Interstitial):
            pos = _cluster_center(sites, vacancies, edit.cluster, cell.lattice.bond_length)
            sites.append(Site(len(sites), edit.species, pos, _electrons(table, edit.species), "i"))
            edited.append(len(sites) - 1)
            continue
        idx = _resolve(cell, sites, edit.site, edited)
        old = sites[idx]
        if isinstance(edit, Vacancy):
            sites[idx] = replace(old, species=VACANT, pi_electrons=0)
            vacancies.append(idx)
        elif isinstance(edit, Substitution):
            sites[idx] = replace(old, species=edit.species, pi_electrons=_electrons(table, edit.species))
        else:
            raise InvalidArgumentError(f"unsupported edit {edit!r}")
        edited.append(idx)
    return replace(cell, sites=tuple(sites), defect=spec, edited=tuple(edited),
                   vacancies=tuple(vacancies))


def _electrons(table: Mapping[str, int], species: str) -> int:
    if species == VACANT or species not in table:
        raise UnknownSpeciesError(f"species {species!r} is not in the parameter table")
    return int(table[species])


def _cluster_center(sites, vacancies, cluster: str, bond: float) -> tuple[float, float]:
    if cluster not in ("VBN", "VNB"):
        raise InvalidArgumentError(
            f"interstitials are only supported at a B-N bi-vacancy ('VBN'), got {cluster!r}")
    vb = [i for i in vacancies if sites[i].sublattice == "B"]
    vn = [i for i in vacancies if sites[i].sublattice == "N"]
    for i in vb:
        for j in vn:
            pi, pj = np.asarray(sites[i].position), np.asarray(sites[j].position)
            if abs(np.linalg.norm(pi - pj) - bond) < 1e-6 * bond:
                mid = 0.5 * (pi + pj)
                return (float(mid[0]), float(mid[1]))
    raise InvalidArgumentError("interstitial needs an adjacent V_B + V_N pair among the earlier edits")


def apply_biaxial_strain(cell: Supercell, s: float) -> Supercell:
    """Scale every position and lattice vector by ``1 + s``."""
    if not s > -1.0:
        raise InvalidArgumentError(f"strain must exceed -1, got {s}")
    f = 1.0 + s
    sites = tuple(replace(x, position=(x.position[0] * f, x.position[1] * f)) for x in cell.sites)
    return replace(cell, lattice=LatticeSpec(cell.lattice.a0 * f), sites=sites,
                   strain=(1.0 + cell.strain) * f - 1.0)


# --- neighbours -----------------------------------------------------------

@dataclass(frozen=True)
class Neighbors:
    """Directed bonds ``i -> j`` where ``j`` sits in periodic image ``image``.

    Every bond appears in both directions, so the list is symmetric.
    """

    i: np.ndarray
    j: np.ndarray
    image: np.ndarray  # (nbonds, 2) integer supercell translations
    distance: np.ndarray

    def __len__(self):
        return len(self.i)

    def coordination(self, n_sites: int) -> np.ndarray:
        return np.bincount(self.i, minlength=n_sites)

    def pairs(self) -> set:
        return {(int(a), int(b), tuple(int(x) for x in m))
                for a, b, m in zip(self.i, self.j, self.image)}


def neighbor_list(cell: Supercell, cutoff: float) -> Neighbors:
    if not cutoff > 0:
        raise InvalidArgumentError("cutoff must be positive")
    keep = np.array([i for i, s in enumerate(cell.sites) if not s.vacant], dtype=int)
    pos = cell.positions[keep]
    A = cell.vectors
    # Image range wide enough for any cutoff relative to the cell heights.
    area = abs(np.linalg.det(A))
    heights = [area / np.linalg.norm(A[1]), area / np.linalg.norm(A[0])]
    reach = [int(math.ceil(cutoff / h)) + 1 for h in heights]
    out_i, out_j, out_m, out_d = [], [], [], []
    for m1 in range(-reach[0], reach[0] + 1):
        for m2 in range(-reach[1], reach[1] + 1):
            shift = m1 * A[0] + m2 * A[1]
            diff = pos[None, :, :] + shift - pos[:, None, :]
            # Rounded so i->j and j->i agree for shells sitting at the cutoff.
            dist = np.linalg.norm(diff, axis=-1)
            near = np.round(dist, 10)
            mask = (near < round(cutoff, 10)) & (near > 1e-9)
            a, b = np.nonzero(mask)
            out_i.append(keep[a])
            out_j.append(keep[b])
            out_m.append(np.tile([m1, m2], (len(a), 1)))
            out_d.append(dist[a, b])
    i = np.concatenate(out_i)
    order = np.lexsort((np.concatenate(out_j), i))
    return Neighbors(i[order], np.concatenate(out_j)[order],
                     np.concatenate(out_m).reshape(-1, 2)[order], np.concatenate(out_d)[order])


def vacancy_neighbors(cell: Supercell) -> list[int]:
    """Lattice sites with a vacancy in their first coordination shell."""
    if not cell.vacancies:
        return []
    bond = cell.lattice.bond_length
    A = cell.vectors
    images = np.array([m1 * A[0] + m2 * A[1] for m1 in (-1, 0, 1) for m2 in (-1, 0, 1)])
    vac = np.array([cell.sites[v].position for v in cell.vacancies])
    out = []
    for s in cell.sites:
        if s.vacant or s.sublattice not in SUBLATTICES:
            continue
        d = np.linalg.norm(vac[:, None, :] + images[None] - np.asarray(s.position), axis=-1)
        if np.any(np.abs(d - bond) < 1e-3 * bond):
            out.append(s.index)
    return out


def defect_region(cell: Supercell, radius: float | None = None) -> list[int]:
    """Orbital-bearing sites within ``radius`` (default 1.1 bonds) of any edited site."""
    if not cell.edited:
        return []
    radius = 1.1 * cell.lattice.bond_length if radius is None else radius
    A = cell.vectors
    images = np.array([m1 * A[0] + m2 * A[1] for m1 in (-1, 0, 1) for m2 in (-1, 0, 1)])
    centers = np.array([cell.sites[e].position for e in cell.edited])
    out = []
    for s in cell.sites:
        if s.vacant:
            continue
        d = np.linalg.norm(centers[:, None, :] + images[None] - np.asarray(s.position), axis=-1)
        if np.min(d) < radius:
            out.append(s.index)
    return out


# --- defect spec files ------------------------------------------------------

def parse_edit(text: str) -> Edit:
    parts = [p.strip() for p in text.strip().split(":")]
    kind = parts[0]

    def site(label: str) -> SiteLabel:
        return int(label[1:]) if label.startswith("#") else label

    if kind == "sub" and len(parts) == 3:
        return Substitution(site(parts[1]), parts[2])
    if kind == "vac" and len(parts) == 2:
        return Vacancy(site(parts[1]))
    if kind == "int" and len(parts) == 3:
        return Interstitial(parts[1], parts[2])
    raise ValueError(f"malformed edit {text!r}")


def format_spec_line(spec: DefectSpec) -> str:
    def one(e):
        if isinstance(e, Substitution):
            return f"sub:{_label_token(e.site)}:{e.species}"
        if isinstance(e, Vacancy):
            return f"vac:{_label_token(e.site)}"
        return f"int:{e.cluster}:{e.species}"

    return f"{spec.base_name} {spec.charge:d} " + ";".join(one(e) for e in spec.edits)


def parse_spec_line(line: str) -> DefectSpec:
    fields = line.split()
    if len(fields) != 3:
        raise ValueError("expected 'NAME charge edit;edit;...'")
    name, charge_text, edits_text = fields
    try:
        charge = int(charge_text)
    except ValueError:
        raise ValueError(f"charge must be an integer, got {charge_text!r}") from None
    edits = [parse_edit(e) for e in edits_text.split(";") if e.strip()]
    try:
        spec = DefectSpec(tuple(edits), charge)
    except InvalidArgumentError as exc:
        raise ValueError(str(exc)) from None
    if name != spec.base_name:
        raise ValueError(f"name {name!r} does not match its edits (expected {spec.base_name!r})")
    return spec


def parse_spec_file(path) -> list[DefectSpec]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read defect list: {exc.strerror}", path=path) from exc
    return parse_spec_text(text, path=path)


def parse_spec_text(text: str, path=None) -> list[DefectSpec]:
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            specs.append(parse_spec_line(line))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    return specs


def parse_spec_lines(text: str, path=None) -> list:
    """Like :func:`parse_spec_text` but keep going: bad lines become ParseError items."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_spec_line(line))
        except ValueError as exc:
            out.append(ParseError(str(exc), line=lineno, path=path))
    return out


def spec(text: str, charge: int = 0) -> DefectSpec:
    """Shorthand: ``spec("sub:B:C")`` or ``spec("sub:N:Al;vac:B", -1)``."""
    return DefectSpec(tuple(parse_edit(e) for e in text.split(";") if e.strip()), charge)
