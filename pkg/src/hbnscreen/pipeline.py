"""End-to-end defect analysis: supercell -> SCF -> dense grid -> levels -> spectrum -> transition."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .classify import (BandGap, TransitionRecord, extract_defect_levels, find_gap,
                       first_order_transition)
from .config import RunConfig
from .electronic import (EigenSolution, MeanFieldState, TightBindingModel, pristine_cell, scf_solve,
                         solve_frozen)
from .errors import BracketError
from .geometry import (DefectSpec, LatticeSpec, Supercell, apply_biaxial_strain, apply_defect,
                       build_supercell)
from .kspace import HIGH_SYMMETRY, gamma_centered, monkhorst_pack, unfold
from .params import TBParams, apply_calibration
from .spectra import AbsorptionSpectrum, dipole_elements, epsilon2, photon_grid

HOST = ("B", "N")


@dataclass(frozen=True)
class Reference:
    """Pristine band edges and spectral scale for one parameter set and strain."""
    gap: BandGap
    spectrum_max: float
    solution: EigenSolution
    mean_field: MeanFieldState


@dataclass
class DefectResult:
    cell: Supercell
    params: TBParams
    mean_field: MeanFieldState
    solution: EigenSolution       # SCF grid, with eigenvectors
    dense: EigenSolution          # dense Gamma-centred grid, frozen mean field
    reference: Reference
    levels: list
    spectrum: AbsorptionSpectrum
    record: TransitionRecord | None


def _grids(cfg: RunConfig):
    return monkhorst_pack(cfg.scf_grid, cfg.scf_grid), gamma_centered(cfg.dense_grid, cfg.dense_grid)


def _scf(cell, params, grid, cfg, model=None):
    return scf_solve(cell, params, grid, mixing=cfg.mixing, tol=cfg.scf_tol,
                     potential_tol=cfg.potential_tol, max_iter=cfg.max_iter, model=model)


def pristine_reference(params: TBParams, cfg: RunConfig = RunConfig(), strain: float = 0.0) -> Reference:
    """Pristine ``n x n`` reference, solved on the primitive cell with unfolded grids.

    The dense grid gets K appended (zero weight) so the band edges at K are exact.
    """
    key = (_params_key(params), _cfg_key(cfg), float(strain))
    return _reference_cached(key, params, cfg, float(strain))


def _params_key(params: TBParams):
    return tuple(sorted(params.snapshot().items()))


def _cfg_key(cfg: RunConfig):
    return (cfg.supercell, cfg.scf_grid, cfg.dense_grid, cfg.scf_tol, cfg.potential_tol, cfg.max_iter,
            cfg.mixing, cfg.sigma, cfg.photon_step, cfg.photon_max)


_REFERENCES: dict = {}


def _reference_cached(key, params, cfg, strain):
    if key in _REFERENCES:
        return _REFERENCES[key]
    n = cfg.supercell
    scf_grid, dense_grid = _grids(cfg)
    prim = pristine_cell(2.504, strain)
    mf, _ = _scf(prim, params, unfold(scf_grid, n, n), cfg)
    dense = solve_frozen(prim, params, mf, unfold(dense_grid, n, n).with_extra(HIGH_SYMMETRY["K"]))
    gap = find_gap(dense)
    # Spectral scale: the pristine n x n supercell at Gamma with the same mean field.
    cell = apply_biaxial_strain(build_supercell(LatticeSpec(), n, n, params.pi_electrons), strain) \
        if strain else build_supercell(LatticeSpec(), n, n, params.pi_electrons)
    tiled = replace(mf, occupations=np.tile(mf.occupations, (n * n, 1)))
    gamma = solve_frozen(cell, params, tiled, gamma_centered(1, 1), vectors=True)
    # The pristine spectrum starts near the gap, so it is sampled up to the full
    # pi bandwidth rather than the defect photon window.
    e = gamma.energies
    top = float(e.max() - e.min()) + 4 * cfg.sigma
    spec = epsilon2(gamma, dipole_elements(gamma, cell, origin=cell.centroid()),
                    photon_grid(max(top, cfg.photon_max), cfg.photon_step), cfg.sigma)
    ref = Reference(gap, float(spec.epsilon2.max()), dense, mf)
    if len(_REFERENCES) > 256:
        _REFERENCES.clear()
    _REFERENCES[key] = ref
    return ref


def defect_cell(spec: DefectSpec, params: TBParams, cfg: RunConfig = RunConfig(), strain: float = 0.0) -> Supercell:
    n = cfg.supercell
    cell = apply_defect(build_supercell(LatticeSpec(), n, n, params.pi_electrons), spec, params.pi_electrons)
    return apply_biaxial_strain(cell, strain) if strain else cell


def analyze_cell(cell: Supercell, params: TBParams, cfg: RunConfig = RunConfig(),
                 reference: Reference | None = None) -> DefectResult:
    """Run the full selection pipeline on an already built (and strained) cell."""
    reference = reference or pristine_reference(params, cfg, cell.strain)
    scf_grid, dense_grid = _grids(cfg)
    model = TightBindingModel(cell, params)
    mf, sol = _scf(cell, params, scf_grid, cfg, model)
    dense = solve_frozen(cell, params, mf, dense_grid, model=model)
    levels = extract_defect_levels(dense, reference.gap, cfg.edge_margin, cfg.flat_tol, cfg.degeneracy_tol)
    gamma = sol if _has_gamma(sol) else solve_frozen(cell, params, mf, gamma_centered(1, 1), vectors=True, model=model)
    spectrum = epsilon2(gamma, dipole_elements(gamma, cell), photon_grid(cfg.photon_max, cfg.photon_step),
                        cfg.sigma, reference_max=reference.spectrum_max, floor_ratio=cfg.peak_floor)
    name = cell.defect.name if cell.defect else "pristine"
    charge = cell.charge
    record = first_order_transition(levels, spectrum, name, charge, reference.gap, cfg.degeneracy_tol)
    return DefectResult(cell, params, mf, sol, dense, reference, levels, spectrum, record)


def _has_gamma(sol: EigenSolution) -> bool:
    try:
        sol.k_index((0.0, 0.0))
    except KeyError:
        return False
    return True


def calibrated_params(spec: DefectSpec, params: TBParams, calibration: dict | None) -> TBParams:
    if not calibration:
        return params
    return apply_calibration(params, calibration.get(spec.name) or calibration.get(spec.base_name))


def run_defect(spec: DefectSpec, params: TBParams, cfg: RunConfig = RunConfig(), strain: float = 0.0,
               calibration: dict | None = None) -> DefectResult:
    p = calibrated_params(spec, params, calibration)
    return analyze_cell(defect_cell(spec, p, cfg, strain), p, cfg)


def transition_at(spec: DefectSpec, params: TBParams, cfg: RunConfig, strain: float) -> TransitionRecord | None:
    """First-order transition of ``spec`` at biaxial ``strain`` (params already calibrated)."""
    return run_defect(spec, params, cfg, strain).record


# --- per-defect calibration -------------------------------------------------

def calibration_knobs(spec: DefectSpec) -> list[str]:
    """Parameters tried in turn for ``spec``: dopant onsite first, then the vacancy shift."""
    from .geometry import Interstitial, Substitution, Vacancy
    knobs = []
    for e in spec.edits:
        if isinstance(e, (Substitution, Interstitial)) and e.species not in HOST:
            knobs.append(f"onsite.{e.species}")
            break
    else:
        for e in spec.edits:
            if isinstance(e, Substitution):
                knobs.append(f"onsite.{e.species}")
                break
    if any(isinstance(e, Vacancy) for e in spec.edits):
        knobs.append("dangling_shift")
    return knobs or ["dangling_shift"]


def calibration_knob(spec: DefectSpec) -> str:
    return calibration_knobs(spec)[0]


def _with_knob(params: TBParams, knob: str, value: float) -> TBParams:
    if knob == "dangling_shift":
        return replace(params, dangling_shift=value)
    return params.with_onsite(**{knob[len("onsite."):]: value})


@dataclass(frozen=True)
class CalibrationResult:
    name: str
    knob: str
    value: float
    energy: float
    target: float
    evaluations: int


def calibrate_defect(spec: DefectSpec, params: TBParams, target_ev: float, cfg: RunConfig = RunConfig(),
                     scan=None, tol: float = 1e-4, max_iter: int = 60) -> CalibrationResult:
    """1D bisection of one calibration knob so the transition energy hits ``target_ev``.

    Knobs from :func:`calibration_knobs` are tried in order; the first whose
    scan brackets the target wins. ``scan`` lists the knob values tried to find
    a sign change (default: -6..6 eV for onsite energies, 0..6 eV for the
    vacancy shift).
    """
    achievable = []
    for knob in calibration_knobs(spec):
        try:
            return _calibrate_knob(spec, params, target_ev, cfg, knob, scan, tol, max_iter)
        except BracketError as exc:
            if exc.achievable is not None:
                achievable.append(exc.achievable)
    span = (min(a[0] for a in achievable), max(a[1] for a in achievable)) if achievable else None
    raise BracketError(f"{spec.name}: target {target_ev} eV not bracketed by "
                       f"{', '.join(calibration_knobs(spec))}", span)


def _calibrate_knob(spec, params, target_ev, cfg, knob, scan, tol, max_iter):
    if scan is None:
        scan = np.linspace(0.0, 6.0, 13) if knob == "dangling_shift" else np.linspace(-6.0, 6.0, 25)
    count = 0

    def f(x):
        nonlocal count
        count += 1
        rec = transition_at(spec, _with_knob(params, knob, float(x)), cfg, 0.0)
        return (rec.energy - target_ev) if rec is not None else None

    # Prefer the bracket closest to the current parameter value.
    current = params.dangling_shift if knob == "dangling_shift" else params.onsite.get(knob[7:], 0.0)
    values = sorted(scan, key=lambda x: abs(x - current))
    samples = {}
    for x in values:
        samples[x] = f(x)
        xs = sorted(k for k, v in samples.items() if v is not None)
        for a, b in zip(xs, xs[1:]):
            if samples[a] * samples[b] <= 0 and _adjacent(a, b, values):
                return _bisect(f, a, b, samples[a], samples[b], tol, max_iter, spec, knob, target_ev, lambda: count)
    finite = [v for v in samples.values() if v is not None]
    achievable = (min(finite) + target_ev, max(finite) + target_ev) if finite else None
    raise BracketError(f"{spec.name}: target {target_ev} eV not bracketed by {knob} scan", achievable)


def _adjacent(a, b, grid) -> bool:
    return not any(a < x < b for x in grid)


def _bisect(f, a, b, fa, fb, tol, max_iter, spec, knob, target, count):
    if abs(fa) <= tol:
        return CalibrationResult(spec.name, knob, float(a), target + fa, target, count())
    if abs(fb) <= tol:
        return CalibrationResult(spec.name, knob, float(b), target + fb, target, count())
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm is None:
            # The transition vanished between samples; shrink toward the defined side.
            b, fb = m, fb
            continue
        if abs(fm) <= tol:
            return CalibrationResult(spec.name, knob, float(m), target + fm, target, count())
        if fa * fm < 0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    raise BracketError(f"{spec.name}: bisection did not reach {tol} eV", None)
