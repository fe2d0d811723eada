"""Acceptance criteria 1-7; each test records one pass/fail line for the summary."""
import time
from dataclasses import replace

import numpy as np

from hbnscreen.catalog import CONSISTENCY_NM, HC_EV_NM, builtin_targets, bundled_dataset, match_targets
from hbnscreen.electronic import (TightBindingModel, band_structure, fit_pristine_params,
                                  pristine_cell, scf_solve)
from hbnscreen.geometry import LatticeSpec, apply_biaxial_strain, apply_defect, build_supercell, spec
from hbnscreen.kspace import high_symmetry_path, monkhorst_pack
from hbnscreen.params import default_calibration
from hbnscreen.pipeline import calibrated_params, defect_cell, pristine_reference, run_defect
from hbnscreen.spectra import dos
from hbnscreen.strain_tuner import bisect_strain, solve_strain_for_target

# Table 1 pairings: application wavelength -> compatible defects (name, charge).
TABLE1_PAIRINGS = {
    552: {("SB-VB", 0), ("InB-VN", 0), ("InN-VB", 0)},
    589: {("OB-VB", 0)},
    590: {("TiN-VB", 0), ("VN-VB-TiBN", 0)},
    602: {("ErB-NB-VN", 0)},
    606: {("SnB-VB", 0)},
    620: {("VN-VB", 0)},
    637: {("AlN", 0)},
    738: {("VB-VB", 0)},
    780: {("ErB-VB", 0), ("ErN-VB", 0)},
    793: {("InB-VB", 0), ("ErN-NB-VN", 0), ("AlB-VB", 0)},
    795: {("InB-VB", 0), ("ErN-NB-VN", 0), ("AlB-VB", 0)},
    850: {("ErN-VN", 0)},
    852: {("ErN-VN", 0)},
    862: {("ErB-VN", -1)},
    894: {("ErB-VB", 1)},
    1330: {("ON-SN", 0)},
    1550: {("ErB", 1)},
}


def test_criterion_1_pristine_gap(params, cfg, acceptance):
    t = time.perf_counter()
    fitted = fit_pristine_params(5.99, 6.0, base=params)
    ref = pristine_reference(fitted, cfg)
    path = high_symmetry_path(cfg.path_resolution, LatticeSpec().reciprocal())
    bands = band_structure(pristine_cell(), fitted, ref.mean_field, path).energies[:, 0]
    elapsed = time.perf_counter() - t
    k = path.vertex_index[path.labels.index("K")]
    vbm_at, cbm_at = int(np.argmax(bands[:, 0])), int(np.argmin(bands[:, 1]))
    gap = bands[k, 1] - bands[k, 0]
    ok = abs(gap - 5.99) <= 0.05 and vbm_at == k and cbm_at == k and elapsed < 5.0
    acceptance(1, ok, f"direct gap {gap:.5f} eV at K (band edges at K: {vbm_at == k and cbm_at == k}), "
                      f"{elapsed:.2f} s")
    assert ok


def test_criterion_2_table1(acceptance):
    t = time.perf_counter()
    records = bundled_dataset()
    consistent = all(abs(HC_EV_NM / r.transition_ev - r.wavelength_nm) <= CONSISTENCY_NM for r in records)
    results = match_targets(records, builtin_targets(), 25.0)
    elapsed = time.perf_counter() - t
    found = {int(m.target.wavelength_nm): {(r.name, r.charge) for r, _ in m.candidates} for m in results}
    missing = {w: sorted(want - found.get(w, set())) for w, want in TABLE1_PAIRINGS.items()
               if not want <= found.get(w, set())}
    ok = consistent and not missing and elapsed < 1.0
    acceptance(2, ok, f"{len(records)} rows consistent={consistent}, missing pairings={missing or 'none'}, "
                      f"842.0 nm -> {sorted(w for w, s in found.items() if ('ErN-VN', 0) in s)}, "
                      f"{elapsed:.3f} s")
    assert ok


def test_criterion_3_dataset_totals_reduced_scope(acceptance):
    # Only the Table 1 extract is bundled, so the 205/92 totals cannot be checked.
    records = bundled_dataset()
    usable = [r for r in records if r.type == "radiative" or r.footnote != "none"]
    ok = len(usable) == len(records) == 21
    acceptance(3, ok, f"REDUCED-SCOPE: Table 1 extract only; {len(records)} records, {len(usable)} "
                      "radiative-or-footnoted (full 205/92 dataset not bundled)")
    assert ok


def _gap_levels(name, params, cfg):
    t = time.perf_counter()
    res = run_defect(spec(name), params, cfg)
    return res, time.perf_counter() - t


def test_criterion_4_carbon_and_isoelectronic(params, cfg, acceptance):
    cal = default_calibration()
    cb, t_cb = _gap_levels("sub:B:C", calibrated_params(spec("sub:B:C"), params, cal), cfg)
    lv = cb.levels
    one_each = (len(lv) == 2 and sum(l.occupied for l in lv) == 1
                and {l.spin for l in lv} == {"up", "down"})
    al, t_al = _gap_levels("sub:B:Al", params, cfg)
    ga, t_ga = _gap_levels("sub:B:Ga", params, cfg)
    ok = one_each and not al.levels and not ga.levels and max(t_cb, t_al, t_ga) < 30
    desc = ", ".join(f"{l.energy:.3f} eV {l.spin} {'occ' if l.occupied else 'empty'}" for l in lv)
    acceptance(4, ok, f"C_B levels [{desc}]; Al_B {len(al.levels)} levels, Ga_B {len(ga.levels)} levels; "
                      f"max {max(t_cb, t_al, t_ga):.1f} s")
    assert ok


CHARGE_DEFECTS = ("sub:B:C", "sub:N:C", "sub:B:S;vac:B")


def test_criterion_5_charge_states(params, cfg, acceptance):
    t = time.perf_counter()
    cal = default_calibration()
    lines = []
    ok = True
    for text in CHARGE_DEFECTS:
        p = calibrated_params(spec(text), params, cal)
        out = {}
        for q in (-1, 0, 1):
            res = run_defect(spec(text, q), p, cfg)
            out[q] = (res.cell.electron_count, res.solution.fermi_level)
        n0, f0 = out[0]
        good = (out[-1][0] == n0 + 1 and out[-1][1] > f0 and out[1][0] == n0 - 1 and out[1][1] < f0)
        ok &= good
        lines.append(f"{spec(text).name}: EF {out[1][1]:.3f} < {f0:.3f} < {out[-1][1]:.3f}")
    elapsed = time.perf_counter() - t
    ok = ok and elapsed < 120
    acceptance(5, ok, "; ".join(lines) + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_6_strain_tuner(params, cfg, acceptance):
    t = time.perf_counter()
    synth = bisect_strain(lambda s: 600 + 5000 * s, 605.0, (-0.02, 0.02))
    synth_ok = abs(synth.required_strain - 0.001) <= 1e-6
    s = spec("sub:B:S;vac:B")
    p = calibrated_params(s, params, default_calibration())
    res = solve_strain_for_target(defect_cell(s, p, cfg), p, 552.0, (-0.02, 0.02), cfg.tol_nm, cfg)
    elapsed = time.perf_counter() - t
    real_ok = 1e-4 <= abs(res.required_strain) <= 1e-2
    ok = synth_ok and real_ok and elapsed < 300
    acceptance(6, ok, f"synthetic s={synth.required_strain:.7f}; S_B V_B s={res.required_strain:.5f} "
                      f"({100 * res.required_strain:.3f} %) -> {res.achieved_wavelength:.3f} nm; {elapsed:.0f} s")
    assert ok


def test_criterion_7_property_suite(params, cfg, acceptance):
    t = time.perf_counter()
    checks = {}
    cell = apply_defect(build_supercell(LatticeSpec(), 7, 7), spec("sub:B:C"))
    grid = monkhorst_pack(cfg.scf_grid, cfg.scf_grid)
    mf, sol = scf_solve(cell, params, grid, tol=cfg.scf_tol)
    checks["scf dE < 1e-4"] = mf.history[-1][0] < 1e-4

    model = TightBindingModel(cell, params)
    rng = np.random.default_rng(11)
    k = rng.uniform(-0.5, 0.5, (4, 2))
    herm = max(np.max(np.abs(h - h.conj().T)) for s in (0, 1)
               for h in model.hamiltonians(k, mf.occupations, s))
    checks["hermitian 1e-14"] = herm <= 1e-14
    e, v = model.diagonalize(k, mf.occupations)
    ortho = max(np.max(np.abs(v[i, s].conj().T @ v[i, s] - np.eye(model.n)))
                for i in range(len(k)) for s in (0, 1))
    checks["orthonormal 1e-9"] = ortho <= 1e-9
    em, _ = model.diagonalize(-k, mf.occupations, vectors=False)
    checks["k/-k 1e-9"] = np.max(np.abs(e - em)) <= 1e-9

    energies = np.linspace(sol.energies.min() - 1, sol.energies.max() + 1, 3001)
    integral = dos(sol, energies, cfg.sigma).integral()
    checks["dos 1%"] = np.all(np.abs(integral - sol.n_bands) <= 0.01 * sol.n_bands)

    s = 0.013
    strained = TightBindingModel(apply_biaxial_strain(cell, s), params)
    scaled = TightBindingModel(cell, replace(params, t0=params.t0 * (1 + s) ** -params.hopping_exponent))
    a, _ = strained.diagonalize(k, mf.occupations, vectors=False)
    b, _ = scaled.diagonalize(k, mf.occupations, vectors=False)
    checks["strain covariance 1e-10"] = np.max(np.abs(a - b)) <= 1e-10

    deltas = {}
    for name in ("sub:B:C", "vac:N"):
        levels = []
        for n in (3, 5, 7):
            res = run_defect(spec(name), params, replace(cfg, supercell=n))
            levels.append(sorted(l.energy - res.reference.gap.vbm for l in res.levels))
        good = len(levels[0]) > 0 and all(len(l) == len(levels[0]) for l in levels)
        if good:
            d1 = np.abs(np.subtract(levels[1], levels[0]))
            d2 = np.abs(np.subtract(levels[2], levels[1]))
            deltas[spec(name).name] = [np.round(d1, 4).tolist(), np.round(d2, 4).tolist()]
            good = bool(np.all(d2 < d1))
        checks[f"supercell convergence {spec(name).name}"] = good
    elapsed = time.perf_counter() - t
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    acceptance(7, ok, f"{len(checks) - len(failed)}/{len(checks)} properties hold"
                      f"{' (failed: ' + ', '.join(failed) + ')' if failed else ''}; "
                      f"herm {herm:.1e}, ortho {ortho:.1e}, level deltas {deltas}; "
                      f"{elapsed:.1f} s")
    assert ok
