"""Serialisation of results: JSON-lines records and columnar text files.

Every output starts with three comment lines: a timestamp, the code version
and the run configuration. Apart from the timestamp, output is a pure
function of the inputs.
"""
from __future__ import annotations

import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


def header_lines(config: dict, params: dict | None = None) -> list[str]:
    lines = [
        f"# generated: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        f"# hbnscreen {__version__}",
        f"# config: {dumps(config)}",
    ]
    if params is not None:
        lines.append(f"# params: {dumps(params)}")
    return lines


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, ensure_ascii=False)


def level_dict(level) -> dict:
    return {
        "energy_ev": level.energy, "spin": level.spin, "occupied": level.occupied,
        "bandwidth_ev": level.bandwidth, "depth": level.depth, "gamma_energy_ev": level.gamma_energy,
    }


def transition_dict(record, margins: dict | None = None) -> dict:
    out = {
        "kind": "transition", "name": record.defect_name, "charge": record.charge,
        "energy_ev": record.energy, "wavelength_nm": record.wavelength, "type": record.type,
        "deep": record.deep, "vb_ground": record.vb_ground,
        "ground": level_dict(record.ground_level) if record.ground_level is not None else None,
        "excited": level_dict(record.excited_level),
        "gamma_energy_ev": record.gamma_energy,
        "peak": list(record.peak) if record.peak is not None else None,
    }
    if margins is not None:
        out["margins"] = margins
    return out


def write_jsonl(path, records, header: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(line + "\n")
        for rec in records:
            fh.write(dumps(rec) + "\n")


def write_columns(path, columns: list[str], rows, header: list[str]) -> None:
    """Whitespace-separated columns with a ``#``-prefixed column header."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(line + "\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(f"{float(v):.10g}" for v in row) + "\n")


def read_columns(path) -> np.ndarray:
    return np.loadtxt(Path(path), comments="#", ndmin=2)
