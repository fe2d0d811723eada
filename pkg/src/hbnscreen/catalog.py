"""Defect dataset and application-target registry; wavelength matching.

Dataset CSV header::

    name,charge,transition_ev,wavelength_nm,type,deformation,footnote

Targets CSV header::

    name,wavelength_nm,category
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DuplicateRecordError, InvalidArgumentError, ParseError

HC_EV_NM = 1239.84193
CONSISTENCY_NM = 1.0
DEFAULT_TOLERANCE_NM = 25.0

TYPES = ("radiative", "non-radiative", "degenerate")
DEFORMATIONS = ("in-plane", "out-of-plane", "unknown")
FOOTNOTES = ("none", "vb-or-degenerate-ground", "double-occupied-degenerate")
CATEGORIES = ("solid-state qubit", "alkali memory", "rare-earth memory", "telecom band")
DATASET_HEADER = ("name", "charge", "transition_ev", "wavelength_nm", "type", "deformation", "footnote")
TARGET_HEADER = ("name", "wavelength_nm", "category")


def ev_to_nm(e: float) -> float:
    if not e > 0:
        raise InvalidArgumentError(f"photon energy must be positive, got {e}")
    return HC_EV_NM / e


def nm_to_ev(wavelength: float) -> float:
    if not wavelength > 0:
        raise InvalidArgumentError(f"wavelength must be positive, got {wavelength}")
    return HC_EV_NM / wavelength


@dataclass(frozen=True)
class DefectRecord:
    name: str
    charge: int
    transition_ev: float
    wavelength_nm: float
    type: str = "radiative"
    deformation: str = "unknown"
    footnote: str = "none"

    @property
    def energy(self) -> float:
        return self.transition_ev

    @property
    def label(self) -> str:
        return self.name if self.charge == 0 else f"{self.name}({self.charge:+d})"


@dataclass(frozen=True)
class ApplicationTarget:
    name: str
    wavelength_nm: float
    category: str


@dataclass(frozen=True)
class MatchResult:
    target: ApplicationTarget
    candidates: tuple   # ((DefectRecord, |delta| nm), ...) ascending
    tolerance: float


def _read_rows(path, header):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from exc
    rows = []
    reader = csv.reader(io.StringIO(text))
    seen_header = False
    for row in reader:
        lineno = reader.line_num
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        row = [c.strip() for c in row]
        if not seen_header:
            if tuple(row) != header:
                raise ParseError(f"expected header {','.join(header)}", line=lineno, path=path)
            seen_header = True
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno, path=path)
        rows.append((lineno, row))
    if not seen_header:
        raise ParseError("missing header", path=path)
    return path, rows


def _choice(value, allowed, what, lineno, path):
    if value not in allowed:
        raise ParseError(f"{what} must be one of {', '.join(allowed)}, got {value!r}", line=lineno, path=path)
    return value


def load_dataset(path) -> list[DefectRecord]:
    """Parse and validate a defect dataset.

    Each row's wavelength must agree with ``hc / transition_ev`` within
    1.0 nm; (name, charge) pairs must be unique.
    """
    path, rows = _read_rows(path, DATASET_HEADER)
    records = []
    seen = {}
    for lineno, (name, charge, ev, nm, kind, deformation, footnote) in rows:
        if not name:
            raise ParseError("empty defect name", line=lineno, path=path)
        try:
            q = int(charge)
            e = float(ev)
            w = float(nm)
        except ValueError:
            raise ParseError("charge, transition_ev and wavelength_nm must be numbers", line=lineno, path=path) from None
        if q not in (-1, 0, 1):
            raise ParseError(f"charge must be -1, 0 or 1, got {q}", line=lineno, path=path)
        if not (e > 0 and w > 0):
            raise ParseError("transition_ev and wavelength_nm must be positive", line=lineno, path=path)
        predicted = HC_EV_NM / e
        if abs(predicted - w) > CONSISTENCY_NM:
            raise ParseError(f"{name}: wavelength {w} nm inconsistent with {e} eV "
                             f"(expected {predicted:.1f} nm)", line=lineno, path=path)
        _choice(kind, TYPES, "type", lineno, path)
        _choice(deformation, DEFORMATIONS, "deformation", lineno, path)
        _choice(footnote, FOOTNOTES, "footnote", lineno, path)
        key = (name, q)
        if key in seen:
            raise DuplicateRecordError(f"duplicate record {name} charge {q} (first on line {seen[key]})",
                                       line=lineno, path=path)
        seen[key] = lineno
        records.append(DefectRecord(name, q, e, w, kind, deformation, footnote))
    return records


def load_targets(path) -> list[ApplicationTarget]:
    path, rows = _read_rows(path, TARGET_HEADER)
    targets = []
    names = set()
    for lineno, (name, nm, category) in rows:
        try:
            w = float(nm)
        except ValueError:
            raise ParseError(f"bad wavelength {nm!r}", line=lineno, path=path) from None
        if not w > 0:
            raise ParseError("wavelength_nm must be positive", line=lineno, path=path)
        _choice(category, CATEGORIES, "category", lineno, path)
        if name in names:
            raise DuplicateRecordError(f"duplicate target {name!r}", line=lineno, path=path)
        names.add(name)
        targets.append(ApplicationTarget(name, w, category))
    return targets


def _data_path(name: str):
    return resources.files("hbnscreen") / "data" / name


def bundled_dataset() -> list[DefectRecord]:
    with resources.as_file(_data_path("table1.csv")) as p:
        return load_dataset(p)


def builtin_targets() -> list[ApplicationTarget]:
    with resources.as_file(_data_path("targets.csv")) as p:
        return load_targets(p)


def find_target(targets, name: str) -> ApplicationTarget:
    """Look up a target by name; ASCII '-' matches the typographic minus."""
    wanted = name.replace("−", "-")
    for t in targets:
        if t.name.replace("−", "-") == wanted:
            return t
    raise KeyError(name)


def match_targets(records, targets, tolerance_nm: float = DEFAULT_TOLERANCE_NM) -> list[MatchResult]:
    """For each target, every record within ``tolerance_nm``, nearest first.

    Ties in distance are broken by name and charge so the result does not
    depend on input order. Results follow ascending target wavelength.
    """
    if not tolerance_nm > 0:
        raise InvalidArgumentError(f"tolerance must be positive, got {tolerance_nm}")
    out = []
    for t in sorted(targets, key=lambda t: (t.wavelength_nm, t.name)):
        hits = [(r, abs(r.wavelength_nm - t.wavelength_nm)) for r in records]
        hits = [h for h in hits if h[1] <= tolerance_nm]
        hits.sort(key=lambda h: (h[1], h[0].name, h[0].charge))
        out.append(MatchResult(t, tuple(hits), float(tolerance_nm)))
    return out
