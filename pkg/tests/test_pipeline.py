import pytest

from hbnscreen.errors import BracketError
from hbnscreen.geometry import spec
from hbnscreen.params import default_calibration
from hbnscreen.pipeline import (calibrate_defect, calibrated_params, calibration_knob, calibration_knobs,
                                pristine_reference, run_defect)


def test_knobs():
    assert calibration_knob(spec("sub:B:S;vac:B")) == "onsite.S"
    assert calibration_knobs(spec("vac:N;vac:B;int:VBN:Ti")) == ["onsite.Ti", "dangling_shift"]
    assert calibration_knobs(spec("vac:N;vac:B")) == ["dangling_shift"]
    assert calibration_knobs(spec("sub:N:O;sub:N:S")) == ["onsite.O"]


def test_reference_is_cached(params, small_cfg):
    a = pristine_reference(params, small_cfg)
    assert pristine_reference(params, small_cfg) is a
    assert a.gap.gap == pytest.approx(5.99, abs=1e-3)
    assert a.spectrum_max > 0


def test_calibrated_params_lookup(params):
    table = {"SB-VB": {"onsite.S": -1.5}, "ErB-VB(+1)": {"onsite.Er": 2.0}}
    assert calibrated_params(spec("sub:B:S;vac:B"), params, table).onsite_of("S") == -1.5
    assert calibrated_params(spec("sub:B:Er;vac:B", 1), params, table).onsite_of("Er") == 2.0
    assert calibrated_params(spec("sub:B:C"), params, table) is params


def test_calibration_hits_target(params, small_cfg):
    s = spec("sub:B:C;sub:N:C")
    res = calibrate_defect(s, params, 4.5, small_cfg, scan=[-4.0, -2.0, 0.0, 2.0])
    assert res.energy == pytest.approx(4.5, abs=1e-4)
    rec = run_defect(s, params.with_onsite(C=res.value), small_cfg).record
    assert rec.energy == pytest.approx(4.5, abs=1e-4)


def test_calibration_reports_reachable_range(params, small_cfg):
    with pytest.raises(BracketError) as info:
        calibrate_defect(spec("sub:B:C;sub:N:C"), params, 12.0, small_cfg, scan=[-2.0, 0.0, 2.0])
    lo, hi = info.value.achievable
    assert lo < hi < 12.0


def test_bundled_calibration_reproduces_sbvb(params, cfg):
    # Table value 2.252 eV; hc/E = 550.55 nm (the table prints 550.7 from rounded input).
    rec = run_defect(spec("sub:B:S;vac:B"), params, cfg, calibration=default_calibration()).record
    assert rec.energy == pytest.approx(2.252, abs=1e-3)
    assert rec.wavelength == pytest.approx(550.5, abs=1.0)
    assert rec.type == "radiative"


@pytest.mark.slow
def test_cbcn_calibrated_to_4_1_is_radiative(params, cfg):
    s = spec("sub:B:C;sub:N:C")
    res = calibrate_defect(s, params, 4.1, cfg, scan=[0.0, -1.0, -2.0, -3.0])
    rec = run_defect(s, params.with_onsite(C=res.value), cfg).record
    assert rec.energy == pytest.approx(4.1, abs=1e-3)
    assert rec.type == "radiative"
