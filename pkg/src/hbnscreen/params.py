"""Tight-binding parameter tables and the per-defect calibration file.

Both files use a flat ``key = value`` text format with ``#`` comments::

    t0 = 2.83
    onsite.B = 2.995
    electrons.C = 1

Calibration entries are keyed by canonical defect name::

    SB-VB.onsite.S = -0.412
    VN-VB.dangling_shift = 1.73
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import InvalidArgumentError, ParseError, UnknownSpeciesError

# Effective pi-electron counts. B, N and C follow the usual sp2 counting; the
# dopant values are calibrated integers (see README, "Model").
DEFAULT_PI_ELECTRONS: dict[str, int] = {
    "B": 0, "N": 2, "C": 1,
    "Al": 0, "Ga": 0, "In": 0,
    "Si": 1, "Ge": 1, "Sn": 0,
    "P": 2, "As": 2, "Sb": 2,
    "O": 0, "S": 0, "Se": 0,
    "Ti": 0, "Er": 0, "Va": 0, "Re": 0,
}


@dataclass(frozen=True)
class TBParams:
    """Single-orbital tight-binding model with a mean-field on-site repulsion.

    Hopping follows ``t(d) = t0 * (d0 / d) ** hopping_exponent`` for every
    bond shorter than ``cutoff_ratio * a`` where ``a`` is the (strained)
    lattice constant.
    """

    onsite: Mapping[str, float]
    pi_electrons: Mapping[str, int]
    t0: float = 2.83
    d0: float = 2.504 / math.sqrt(3.0)
    hopping_exponent: float = 2.0
    U: float = 2.0
    dangling_shift: float = 4.0
    cutoff_ratio: float = 0.85
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.t0 > 0:
            raise InvalidArgumentError(f"t0 must be positive, got {self.t0}")
        if self.U < 0:
            raise InvalidArgumentError(f"U must be non-negative, got {self.U}")
        if self.d0 <= 0:
            raise InvalidArgumentError("d0 must be positive")

    def onsite_of(self, species: str) -> float:
        try:
            return float(self.onsite[species])
        except KeyError:
            raise UnknownSpeciesError(f"no on-site energy for species {species!r}") from None

    def electrons_of(self, species: str) -> int:
        try:
            return int(self.pi_electrons[species])
        except KeyError:
            raise UnknownSpeciesError(f"no pi-electron count for species {species!r}") from None

    def hopping(self, d):
        return self.t0 * (self.d0 / d) ** self.hopping_exponent

    def with_onsite(self, **values: float) -> "TBParams":
        onsite = dict(self.onsite)
        onsite.update(values)
        return replace(self, onsite=onsite)

    def snapshot(self) -> dict:
        out = {
            "t0": self.t0, "d0": self.d0, "hopping_exponent": self.hopping_exponent,
            "U": self.U, "dangling_shift": self.dangling_shift,
            "cutoff_ratio": self.cutoff_ratio,
        }
        for sp in sorted(self.onsite):
            out[f"onsite.{sp}"] = float(self.onsite[sp])
        for sp in sorted(self.pi_electrons):
            out[f"electrons.{sp}"] = int(self.pi_electrons[sp])
        return out


_SCALARS = ("t0", "d0", "hopping_exponent", "U", "dangling_shift", "cutoff_ratio")


def read_key_values(path) -> list[tuple[int, str, str]]:
    """Return ``(line_number, key, value)`` triples from a key-value file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from exc
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno, path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"empty key or value in {raw.strip()!r}", line=lineno, path=path)
        out.append((lineno, key, value))
    return out


def load_params(path) -> TBParams:
    scalars: dict[str, float] = {}
    onsite: dict[str, float] = {}
    electrons: dict[str, int] = {}
    for lineno, key, value in read_key_values(path):
        try:
            if key in _SCALARS:
                scalars[key] = float(value)
            elif key.startswith("onsite."):
                onsite[key[len("onsite."):]] = float(value)
            elif key.startswith("electrons."):
                electrons[key[len("electrons."):]] = int(value)
            else:
                raise ParseError(f"unknown parameter {key!r}", line=lineno, path=path)
        except ValueError as exc:
            raise ParseError(f"bad number for {key!r}: {value!r}", line=lineno, path=path) from exc
    missing = sorted(set(onsite) ^ set(electrons))
    if missing:
        raise ParseError(f"species need both onsite and electrons entries: {', '.join(missing)}", path=path)
    try:
        return TBParams(onsite=onsite, pi_electrons=electrons, **scalars)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path=path) from exc


def format_params(params: TBParams) -> str:
    lines = []
    for key, value in params.snapshot().items():
        lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def save_params(params: TBParams, path) -> None:
    Path(path).write_text(format_params(params), encoding="utf-8")


def default_params() -> TBParams:
    with resources.as_file(resources.files("hbnscreen") / "data" / "params.txt") as p:
        return load_params(p)


# --- calibration ----------------------------------------------------------

def load_calibration(path) -> dict[str, dict[str, float]]:
    """Map canonical defect name -> {parameter key: value}.

    Parameter keys are ``onsite.<species>`` or ``dangling_shift``.
    """
    table: dict[str, dict[str, float]] = {}
    for lineno, key, value in read_key_values(path):
        name, sep, param = key.partition(".")
        if not sep or not (param == "dangling_shift" or param.startswith("onsite.")):
            raise ParseError(f"bad calibration key {key!r}", line=lineno, path=path)
        try:
            table.setdefault(name, {})[param] = float(value)
        except ValueError as exc:
            raise ParseError(f"bad number {value!r}", line=lineno, path=path) from exc
    return table


def save_calibration(table: Mapping[str, Mapping[str, float]], path, header: str = "") -> None:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    for name in table:
        for param, value in table[name].items():
            lines.append(f"{name}.{param} = {value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_calibration() -> dict[str, dict[str, float]]:
    with resources.as_file(resources.files("hbnscreen") / "data" / "calibration.txt") as p:
        return load_calibration(p)


def apply_calibration(params: TBParams, entry: Mapping[str, float] | None) -> TBParams:
    if not entry:
        return params
    onsite = dict(params.onsite)
    shift = params.dangling_shift
    for key, value in entry.items():
        if key == "dangling_shift":
            shift = value
        else:
            onsite[key[len("onsite."):]] = value
    return replace(params, onsite=onsite, dangling_shift=shift)
