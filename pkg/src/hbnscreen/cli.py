"""Command-line interface.

Commands: ``bands``, ``screen``, ``tune``, ``match``, ``fit-params`` and
``calibrate``. Exit codes: 0 success, 1 numerical failure, 2 input error.
Records go to stdout as JSON lines (after the comment header) and to files
in ``--output-dir``.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import (DEFAULT_TOLERANCE_NM, builtin_targets, bundled_dataset, load_dataset, load_targets,
                      match_targets, nm_to_ev)
from .classify import histogram
from .config import RunConfig, load_config
from .errors import (BracketError, ConvergenceError, DefectConflictError, FitError, HbnScreenError,
                     InvalidArgumentError, NoGapError, NoTransitionError, ParseError, UnknownSpeciesError)
from .geometry import DefectSpec, parse_spec_file, parse_spec_line, parse_spec_lines, spec as make_spec
from .params import (default_calibration, default_params, load_calibration, load_params, save_calibration,
                     save_params)
from .records import dumps, header_lines, level_dict, transition_dict, write_columns, write_jsonl

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (ParseError, InvalidArgumentError, UnknownSpeciesError, DefectConflictError, FileNotFoundError)
NUMERICAL_ERRORS = (ConvergenceError, FitError, NoGapError, NoTransitionError, BracketError)

CONFIG_FLAGS = {
    "supercell": int, "scf_grid": int, "dense_grid": int, "scf_tol": float, "potential_tol": float,
    "max_iter": int, "mixing": float, "edge_margin": float, "flat_tol": float, "degeneracy_tol": float,
    "sigma": float, "photon_step": float, "photon_max": float, "peak_floor": float,
    "strain_min": float, "strain_max": float, "strain_points": int, "tol_nm": float,
    "match_tolerance": float, "histogram_bin": float, "path_resolution": int,
    "target_gap": float, "target_bandwidth": float,
}


class _Context:
    """Resolved configuration, parameters and output plumbing for one command."""

    def __init__(self, args):
        overrides = {k: getattr(args, k, None) for k in CONFIG_FLAGS}
        for key in ("params_file", "calibration_file", "output_dir"):
            overrides[key] = getattr(args, key, None)
        self.cfg: RunConfig = load_config(args.config, **overrides)
        self.out = Path(self.cfg.output_dir)
        self._params = None
        self._calibration = None

    @property
    def params(self):
        if self._params is None:
            self._params = load_params(self.cfg.params_file) if self.cfg.params_file else default_params()
        return self._params

    @property
    def calibration(self):
        if self._calibration is None:
            path = self.cfg.calibration_file
            self._calibration = load_calibration(path) if path else default_calibration()
        return self._calibration

    def header(self, with_params=True):
        return header_lines(self.cfg.snapshot(), self.params.snapshot() if with_params else None)

    def ensure_out(self):
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out


def _emit_header(lines):
    for line in lines:
        print(line)


def _emit(record):
    print(dumps(record), flush=True)


def _resolve_defect(text: str, charge: int | None) -> DefectSpec | None:
    """``pristine``, a defect-list file (first entry) or an inline edit list."""
    if text == "pristine":
        return None
    path = Path(text)
    if path.exists():
        specs = parse_spec_file(path)
        if not specs:
            raise ParseError("defect file lists no defects", path=path)
        spec = specs[0]
        return spec if charge is None else replace(spec, charge=charge)
    try:
        if " " in text.strip():
            return parse_spec_line(text)
        return make_spec(text, charge or 0)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from None


def _safe_name(name: str) -> str:
    return name.replace("(", "_").replace(")", "").replace("+", "p")


# --- commands ---------------------------------------------------------------

def cmd_bands(args) -> int:
    from .electronic import band_structure, pristine_cell
    from .kspace import high_symmetry_path
    from .pipeline import calibrated_params, pristine_reference, run_defect

    ctx = _Context(args)
    spec = _resolve_defect(args.defect, args.charge)
    cfg = ctx.cfg
    header = ctx.header()
    out = ctx.ensure_out()
    _emit_header(header)
    if spec is None:
        params = ctx.params
        ref = pristine_reference(params, cfg)
        cell = pristine_cell()
        mf = ref.mean_field
        name = "pristine"
    else:
        params = calibrated_params(spec, ctx.params, ctx.calibration)
        result = run_defect(spec, params, cfg)
        ref, cell, mf, name = result.reference, result.cell, result.mean_field, spec.name
    path = high_symmetry_path(cfg.path_resolution, cell.lattice.reciprocal() if spec is None else
                              2 * np.pi * np.linalg.inv(cell.vectors).T)
    bands = band_structure(cell, params, mf, path)
    for s, label in ((0, "up"), (1, "down")):
        cols = ["distance"] + [f"band{b}" for b in range(bands.energies.shape[-1])]
        rows = np.column_stack([path.distance, bands.energies[:, s, :]])
        write_columns(out / f"{_safe_name(name)}_bands_{label}.dat", cols, rows, header)
    gap = ref.gap
    _emit({"kind": "gap", "name": name, "vbm_ev": gap.vbm, "cbm_ev": gap.cbm, "gap_ev": gap.gap,
           "direct_at": gap.direct_at, "direct_gap_ev": gap.direct_gap})
    if spec is not None:
        for lv in result.levels:
            _emit({"kind": "level", "name": name, **level_dict(lv)})
        if result.record is not None:
            _emit(transition_dict(result.record, _margins(cfg)))
        else:
            _emit({"kind": "no-transition", "name": name, "charge": spec.charge})
    return EXIT_OK


def _margins(cfg: RunConfig) -> dict:
    return {"edge_margin": cfg.edge_margin, "flat_tol": cfg.flat_tol, "degeneracy_tol": cfg.degeneracy_tol,
            "peak_floor": cfg.peak_floor, "sigma": cfg.sigma}


def screen_records(items, params, calibration, cfg):
    """One record per parsed item; failures become error records."""
    from .pipeline import calibrated_params, run_defect
    records = []
    for item in items:
        if isinstance(item, ParseError):
            records.append({"kind": "error", "line": item.line, "error": "ParseError", "message": str(item)})
            continue
        try:
            p = calibrated_params(item, params, calibration)
            rec = run_defect(item, p, cfg).record
        except (HbnScreenError, ValueError, KeyError) as exc:
            records.append({"kind": "error", "name": item.name, "charge": item.charge,
                            "error": type(exc).__name__, "message": str(exc)})
            continue
        if rec is None:
            records.append({"kind": "no-transition", "name": item.name, "charge": item.charge})
        else:
            records.append(transition_dict(rec, _margins(cfg)))
    return records


def cmd_screen(args) -> int:
    ctx = _Context(args)
    path = Path(args.defects)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read defect list: {exc.strerror}", path=path) from None
    items = parse_spec_lines(text, path=path)
    cfg = ctx.cfg
    header = ctx.header()
    records = screen_records(items, ctx.params, ctx.calibration, cfg)
    out = ctx.ensure_out()
    write_jsonl(out / "screen.jsonl", records, header)

    class _R:  # histogram only needs energy and type
        def __init__(self, r):
            self.energy, self.type = r["energy_ev"], r["type"]

    hist = histogram([_R(r) for r in records if r["kind"] == "transition"], cfg.histogram_bin)
    rows = np.column_stack([hist.edges[:-1], hist.edges[1:]] + [hist.counts[t] for t in hist.counts])
    write_columns(out / "histogram.dat", ["lo_ev", "hi_ev"] + list(hist.counts), rows, header)
    _emit_header(header)
    for r in records:
        _emit(r)
    return EXIT_OK


def cmd_tune(args) -> int:
    from .pipeline import calibrated_params, defect_cell
    from .strain_tuner import solve_strain_for_target, sweep

    ctx = _Context(args)
    spec = _resolve_defect(args.defect, args.charge)
    if spec is None:
        raise InvalidArgumentError("tune needs a defect, not the pristine cell")
    if not args.target > 0:
        raise InvalidArgumentError("target wavelength must be positive")
    cfg = ctx.cfg
    params = calibrated_params(spec, ctx.params, ctx.calibration)
    cell = defect_cell(spec, params, cfg)
    header = ctx.header()
    out = ctx.ensure_out()
    _emit_header(header)
    curve = sweep(cell, params, cfg.strains(), cfg)
    rows = [(p.s, p.energy if p.valid else np.nan, p.wavelength if p.valid else np.nan) for p in curve.samples]
    write_columns(out / f"{_safe_name(spec.name)}_strain.dat", ["s", "energy_ev", "wavelength_nm"], rows, header)
    fit = curve.fit
    _emit({"kind": "strain-curve", "name": spec.name, "gaps": curve.gaps,
           "fit": None if fit is None else {"degree": fit.degree, "coefficients": list(fit.coefficients),
                                            "residual_nm": fit.residual}})
    # Bisect inside the sweep interval whose ends straddle the target.
    valid = curve.valid
    bracket = None
    for a, b in zip(valid, valid[1:]):
        if (a.wavelength - args.target) * (b.wavelength - args.target) <= 0:
            bracket = (a.s, b.s)
            break
    if bracket is None:
        lo = min(p.wavelength for p in valid)
        hi = max(p.wavelength for p in valid)
        _emit({"kind": "error", "name": spec.name, "error": "BracketError",
               "message": f"target {args.target} nm outside achievable range",
               "achievable_nm": [lo, hi]})
        print(f"target {args.target} nm not reachable; achievable range {lo:.3f}-{hi:.3f} nm "
              f"over s in [{cfg.strain_min}, {cfg.strain_max}]", file=sys.stderr)
        return EXIT_NUMERICAL
    res = solve_strain_for_target(cell, params, args.target, bracket, cfg.tol_nm, cfg)
    _emit({"kind": "tune", "name": spec.name, "charge": spec.charge, "target_nm": res.target,
           "required_strain": res.required_strain, "achieved_wavelength_nm": res.achieved_wavelength,
           "achieved_energy_ev": nm_to_ev(res.achieved_wavelength), "iterations": res.iterations,
           "bracket": list(res.bracket), "unstrained_wavelength_nm":
           next((p.wavelength for p in curve.samples if p.s == 0.0 and p.valid), None)})
    return EXIT_OK


def cmd_match(args) -> int:
    ctx = _Context(args)
    records = load_dataset(args.dataset) if args.dataset else bundled_dataset()
    targets = load_targets(args.targets) if args.targets and args.targets != "builtin" else builtin_targets()
    tol = args.tolerance if args.tolerance is not None else ctx.cfg.match_tolerance
    results = match_targets(records, targets, tol)
    header = ctx.header(with_params=False)
    rows = []
    for m in results:
        base = {"kind": "match", "target": m.target.name, "target_nm": m.target.wavelength_nm,
                "category": m.target.category, "tolerance_nm": m.tolerance}
        if not m.candidates:
            rows.append({**base, "defect": None})
        for rank, (rec, delta) in enumerate(m.candidates, start=1):
            rows.append({**base, "rank": rank, "defect": rec.name, "charge": rec.charge,
                         "transition_ev": rec.transition_ev, "wavelength_nm": rec.wavelength_nm,
                         "delta_nm": delta, "type": rec.type, "footnote": rec.footnote})
    if args.write:
        write_jsonl(ctx.ensure_out() / "match.jsonl", rows, header)
    _emit_header(header)
    for r in rows:
        _emit(r)
    return EXIT_OK


def cmd_fit_params(args) -> int:
    from .electronic import fit_pristine_params
    from .pipeline import pristine_reference

    ctx = _Context(args)
    cfg = ctx.cfg
    base = ctx.params
    if args.U is not None:
        base = replace(base, U=args.U)
    fitted = fit_pristine_params(cfg.target_gap, cfg.target_bandwidth, base=base)
    ref = pristine_reference(fitted, cfg)
    header = header_lines(cfg.snapshot(), fitted.snapshot())
    if args.output:
        save_params(fitted, args.output)
    _emit_header(header)
    _emit({"kind": "fit", "t0": fitted.t0, "onsite_B": fitted.onsite["B"], "onsite_N": fitted.onsite["N"],
           "U": fitted.U, "gap_ev": ref.gap.gap, "direct_at": ref.gap.direct_at,
           "target_gap_ev": cfg.target_gap, "target_bandwidth_ev": cfg.target_bandwidth,
           "output": args.output})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .pipeline import calibrate_defect

    ctx = _Context(args)
    dataset = load_dataset(args.dataset) if args.dataset else bundled_dataset()
    by_key = {(r.name, r.charge): r for r in dataset}
    specs = parse_spec_file(args.defects)
    _emit_header(ctx.header())
    table = {}
    failures = 0
    for sp in specs:
        rec = by_key.get((sp.base_name, sp.charge))
        if rec is None:
            _emit({"kind": "error", "name": sp.name, "error": "KeyError", "message": "not in dataset"})
            failures += 1
            continue
        try:
            res = calibrate_defect(sp, ctx.params, rec.transition_ev, ctx.cfg)
        except (HbnScreenError, ValueError) as exc:
            _emit({"kind": "error", "name": sp.name, "error": type(exc).__name__, "message": str(exc)})
            failures += 1
            continue
        table[sp.name] = {res.knob: res.value}
        _emit({"kind": "calibration", "name": sp.name, "knob": res.knob, "value": res.value,
               "energy_ev": res.energy, "target_ev": res.target, "evaluations": res.evaluations})
    if args.output:
        save_calibration(table, args.output, header=f"hbnscreen {__version__} per-defect calibration")
    return EXIT_OK if not failures or table else EXIT_NUMERICAL


# --- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--params", dest="params_file", help="tight-binding parameter file")
    p.add_argument("--calibration", dest="calibration_file", help="per-defect calibration file")
    p.add_argument("--output-dir", dest="output_dir", help="directory for output files")
    group = p.add_argument_group("config overrides", "take precedence over --config")
    for name, kind in CONFIG_FLAGS.items():
        group.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None,
                           metavar=kind.__name__.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbnscreen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hbnscreen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bands", help="band structure, gap and defect levels")
    p.add_argument("defect", help="'pristine', a defect-list file, or edits such as 'sub:B:C'")
    p.add_argument("--charge", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("screen", help="classify every defect in a list")
    p.add_argument("defects", help="defect-list file: NAME charge edits")
    _add_common(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("tune", help="strain needed to reach a target wavelength")
    p.add_argument("defect")
    p.add_argument("--target", type=float, required=True, help="target wavelength (nm)")
    p.add_argument("--charge", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("match", help="match dataset transitions to application wavelengths")
    p.add_argument("--dataset", help="dataset CSV (default: bundled Table 1 extract)")
    p.add_argument("--targets", help="targets CSV or 'builtin'")
    p.add_argument("--tolerance", type=float, default=None, help=f"nm (default {DEFAULT_TOLERANCE_NM})")
    p.add_argument("--write", action="store_true", help="also write match.jsonl to the output directory")
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("fit-params", help="fit onsite(B) - onsite(N) and t0 to the pristine gap")
    p.add_argument("--U", type=float, default=None)
    p.add_argument("-o", "--output", help="write the fitted parameter file here")
    _add_common(p)
    p.set_defaults(func=cmd_fit_params)

    p = sub.add_parser("calibrate", help="fit per-defect knobs to dataset transition energies")
    p.add_argument("defects", help="defect-list file")
    p.add_argument("--dataset", help="dataset CSV (default: bundled Table 1 extract)")
    p.add_argument("-o", "--output", help="write the calibration file here")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for i, (de, dv) in enumerate(exc.history[-10:], start=max(1, len(exc.history) - 9)):
            print(f"  iteration {i}: dE={de:.3e} eV dV={dv:.3e} eV", file=sys.stderr)
        return EXIT_NUMERICAL
    except BracketError as exc:
        rng = f" (achievable {exc.achievable[0]:.3f}-{exc.achievable[1]:.3f})" if exc.achievable else ""
        print(f"error: {exc}{rng}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # Downstream reader (e.g. head) closed early; silence the flush at exit.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
