"""Run configuration: defaults, flat key-value file loading, snapshots."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import InvalidArgumentError, ParseError
from .params import read_key_values


@dataclass(frozen=True)
class RunConfig:
    supercell: int = 7
    scf_grid: int = 5
    dense_grid: int = 11
    scf_tol: float = 1e-4
    potential_tol: float = 1e-5
    max_iter: int = 500
    mixing: float = 0.3
    edge_margin: float = 0.5
    flat_tol: float = 0.1
    degeneracy_tol: float = 1e-3
    sigma: float = 0.05
    photon_step: float = 0.01
    photon_max: float = 6.5
    peak_floor: float = 1e-3
    strain_min: float = -0.02
    strain_max: float = 0.02
    strain_points: int = 9
    tol_nm: float = 1e-3
    match_tolerance: float = 25.0
    histogram_bin: float = 0.25
    path_resolution: int = 30
    target_gap: float = 5.99
    target_bandwidth: float = 6.0
    params_file: str = ""
    calibration_file: str = ""
    output_dir: str = "."

    def __post_init__(self):
        positive = ("supercell", "scf_grid", "dense_grid", "scf_tol", "potential_tol", "max_iter",
                    "mixing", "flat_tol", "degeneracy_tol", "sigma", "photon_step", "photon_max",
                    "peak_floor", "tol_nm", "match_tolerance", "histogram_bin", "target_bandwidth")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"config {name} must be positive, got {getattr(self, name)}")
        if self.edge_margin < 0 or self.target_gap < 0:
            raise InvalidArgumentError("edge_margin and target_gap must be non-negative")
        if self.mixing > 1:
            raise InvalidArgumentError("mixing must lie in (0, 1]")
        if self.strain_points < 2 or not self.strain_min < self.strain_max:
            raise InvalidArgumentError("strain sweep needs >= 2 points and strain_min < strain_max")
        if self.path_resolution < 2:
            raise InvalidArgumentError("path_resolution must be >= 2")

    def snapshot(self) -> dict:
        return asdict(self)

    def strains(self) -> list[float]:
        n = self.strain_points
        return [self.strain_min + (self.strain_max - self.strain_min) * i / (n - 1) for i in range(n)]


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(name: str, value):
    """Convert ``value`` to the type of config field ``name``."""
    if name not in _TYPES:
        raise InvalidArgumentError(f"unknown config key {name!r}")
    kind = _TYPES[name]
    try:
        if kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"config {name} expects {kind}, got {value!r}") from None
    return str(value)


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the key-value file at ``path``, then ``overrides`` (None skipped)."""
    values = {}
    if path:
        for lineno, key, value in read_key_values(path):
            key = key.replace("-", "_")
            try:
                values[key] = coerce(key, value)
            except InvalidArgumentError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    for key, value in overrides.items():
        if value is not None:
            values[key] = coerce(key, value)
    return replace(RunConfig(), **values)
