"""Biaxial strain sweeps, wavelength(s) fits and bisection for a target wavelength.

Root finding always runs on the full pipeline; the polynomial fit is a
diagnostic summary of the sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BracketError, InsufficientDataError, InvalidArgumentError, NoTransitionError

MAX_STRAIN = 0.05
STRAIN_TOL = 1e-6
QUADRATIC_GAIN = 0.2  # degree 2 must cut the RMS residual by at least this fraction


@dataclass(frozen=True)
class StrainSample:
    s: float
    energy: float | None      # None: no first-order transition at this strain
    wavelength: float | None

    @property
    def valid(self) -> bool:
        return self.energy is not None


@dataclass(frozen=True)
class CurveFit:
    coefficients: tuple   # wavelength(s) = sum c_i s^i, lowest order first
    degree: int
    residual: float       # RMS, nm
    residuals: tuple      # (linear RMS, quadratic RMS or nan)

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(s, self.coefficients)


@dataclass(frozen=True)
class StrainCurve:
    samples: tuple
    fit: CurveFit | None = None

    @property
    def valid(self) -> list[StrainSample]:
        return [p for p in self.samples if p.valid]

    @property
    def gaps(self) -> list[float]:
        return [p.s for p in self.samples if not p.valid]


@dataclass(frozen=True)
class TuneResult:
    defect_name: str
    target: float
    required_strain: float
    achieved_wavelength: float
    iterations: int
    bracket: tuple


def sweep_function(energy_at: Callable[[float], float | None], strains) -> StrainCurve:
    """Sample ``energy_at(s)`` (eV or None) over sorted ``strains``."""
    from .catalog import ev_to_nm
    strains = sorted(float(s) for s in strains)
    for s in strains:
        if abs(s) > MAX_STRAIN:
            raise InvalidArgumentError(f"|s| must not exceed {MAX_STRAIN}, got {s}")
    samples = []
    for s in strains:
        e = energy_at(s)
        samples.append(StrainSample(s, e, ev_to_nm(e) if e is not None else None))
    if not any(p.valid for p in samples):
        raise NoTransitionError("no first-order transition at any sampled strain", None)
    curve = StrainCurve(tuple(samples))
    try:
        return StrainCurve(curve.samples, fit_curve(curve))
    except InsufficientDataError:
        return curve


def sweep(cell, params, strains, cfg=None) -> StrainCurve:
    """Full pipeline (strain -> SCF -> classify) for each strain of a defected cell."""
    from .geometry import apply_biaxial_strain
    from .pipeline import RunConfig, analyze_cell
    cfg = cfg or RunConfig()

    def energy_at(s):
        strained = apply_biaxial_strain(cell, s) if s else cell
        rec = analyze_cell(strained, params, cfg).record
        return rec.energy if rec is not None else None

    return sweep_function(energy_at, strains)


def _lstsq(s, y, degree):
    coef = np.polynomial.polynomial.polyfit(s, y, degree)
    fitted = np.polynomial.polynomial.polyval(s, coef)
    return coef, float(np.sqrt(np.mean((fitted - y) ** 2)))


def fit_curve(curve) -> CurveFit:
    """Least-squares wavelength(s); degree 2 only if it lowers the RMS by >= 20 %.

    A linear fit already at round-off level (RMS below 1e-9 of the mean
    wavelength) is kept as is.
    """
    pts = curve.valid if isinstance(curve, StrainCurve) else [p for p in curve if p.valid]
    if len(pts) < 3:
        raise InsufficientDataError(f"need at least 3 valid samples, got {len(pts)}")
    s = np.array([p.s for p in pts])
    y = np.array([p.wavelength for p in pts])
    c1, r1 = _lstsq(s, y, 1)
    c2, r2 = _lstsq(s, y, 2)
    floor = 1e-9 * float(np.mean(np.abs(y)))
    if r1 > floor and r2 <= (1.0 - QUADRATIC_GAIN) * r1:
        return CurveFit(tuple(float(c) for c in c2), 2, r2, (r1, r2))
    return CurveFit(tuple(float(c) for c in c1), 1, r1, (r1, r2))


def max_iterations(bracket, s_tol: float = STRAIN_TOL) -> int:
    width = bracket[1] - bracket[0]
    return max(0, math.ceil(math.log2(width / s_tol))) if width > s_tol else 0


def bisect_strain(wavelength_at: Callable[[float], float | None], target: float, bracket,
                  tol_nm: float = 1e-3, s_tol: float = STRAIN_TOL, name: str = "") -> TuneResult:
    """Bisection for ``wavelength_at(s) == target`` inside ``bracket``.

    Stops when the wavelength is within ``tol_nm`` or the strain interval is
    narrower than ``s_tol``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise InvalidArgumentError(f"bracket must be increasing, got {bracket}")
    if not tol_nm > 0:
        raise InvalidArgumentError("tol_nm must be positive")

    def evaluate(s):
        w = wavelength_at(s)
        if w is None:
            raise NoTransitionError(f"first-order transition lost at s={s:.6g}", s)
        return w

    wlo, whi = evaluate(lo), evaluate(hi)
    for s, w in ((lo, wlo), (hi, whi)):
        if abs(w - target) <= tol_nm:
            return TuneResult(name, target, s, w, 0, (lo, hi))
    if (wlo - target) * (whi - target) > 0:
        raise BracketError(f"target {target:.3f} nm outside [{min(wlo, whi):.3f}, {max(wlo, whi):.3f}] nm",
                           (min(wlo, whi), max(wlo, whi)))
    flo = wlo - target
    iterations = 0
    best = (lo, wlo) if abs(wlo - target) < abs(whi - target) else (hi, whi)
    a, b = lo, hi
    while b - a > s_tol:
        m = 0.5 * (a + b)
        wm = evaluate(m)
        iterations += 1
        if abs(wm - target) < abs(best[1] - target):
            best = (m, wm)
        if abs(wm - target) <= tol_nm:
            break
        if (wm - target) * flo < 0:
            b = m
        else:
            a, flo = m, wm - target
    return TuneResult(name, target, best[0], best[1], iterations, (lo, hi))


def solve_strain_for_target(cell, params, target: float, bracket=(-0.02, 0.02), tol_nm: float = 1e-3,
                            cfg=None) -> TuneResult:
    """Strain placing the defect's first-order transition at ``target`` nm."""
    from .geometry import apply_biaxial_strain
    from .pipeline import RunConfig, analyze_cell
    cfg = cfg or RunConfig()
    for s in bracket:
        if abs(s) > MAX_STRAIN:
            raise InvalidArgumentError(f"|s| must not exceed {MAX_STRAIN}, got {s}")

    def wavelength_at(s):
        strained = apply_biaxial_strain(cell, s) if s else cell
        rec = analyze_cell(strained, params, cfg).record
        return rec.wavelength if rec is not None else None

    name = cell.defect.name if cell.defect else "pristine"
    return bisect_strain(wavelength_at, target, bracket, tol_nm, name=name)
