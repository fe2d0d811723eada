from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbnscreen.catalog import ev_to_nm
from hbnscreen.electronic import assemble_hamiltonian, pristine_cell
from hbnscreen.errors import BracketError, InsufficientDataError, InvalidArgumentError, NoTransitionError
from hbnscreen.strain_tuner import (StrainCurve, StrainSample, bisect_strain, fit_curve, max_iterations,
                                    sweep_function)


def _samples(fn, strains):
    return StrainCurve(tuple(StrainSample(s, 1.0, fn(s)) for s in strains))


def test_linear_benchmark():
    res = bisect_strain(lambda s: 600 + 5000 * s, 605.0, (-0.02, 0.02))
    assert res.required_strain == pytest.approx(0.001, abs=1e-6)
    # Stops on the wavelength tolerance or a strain interval below 1e-6.
    assert abs(res.achieved_wavelength - 605.0) <= 5000 * 1e-6


def test_linear_fit_recovers_coefficients():
    fit = fit_curve(_samples(lambda s: 600 + 5000 * s, np.linspace(-0.02, 0.02, 9)))
    assert fit.degree == 1
    np.testing.assert_allclose(fit.coefficients, [600, 5000], atol=1e-8)


def test_parabola_selects_quadratic():
    fit = fit_curve(_samples(lambda s: 600 + 1000 * s + 2e5 * s * s, np.linspace(-0.02, 0.02, 9)))
    assert fit.degree == 2
    np.testing.assert_allclose(fit.coefficients, [600, 1000, 2e5], rtol=1e-8)


def test_noisy_line_stays_linear():
    rng = np.random.default_rng(7)
    s = np.linspace(-0.02, 0.02, 9)
    noise = dict(zip(s, rng.normal(0, 0.05, len(s))))
    fit = fit_curve(_samples(lambda x: 600 + 5000 * x + noise[x], s))
    assert fit.degree == 1
    assert fit.coefficients[1] == pytest.approx(5000, rel=0.01)


def test_fit_needs_three_points():
    with pytest.raises(InsufficientDataError):
        fit_curve(_samples(lambda s: 600.0, [0.0, 0.01]))


def test_bracket_error_reports_range():
    with pytest.raises(BracketError) as info:
        bisect_strain(lambda s: 600 + 5000 * s, 800.0, (-0.02, 0.02))
    lo, hi = info.value.achievable
    assert lo == pytest.approx(500.0) and hi == pytest.approx(700.0)


def test_lost_transition():
    def w(s):
        return None if s > 0.005 else 600 + 5000 * s
    with pytest.raises(NoTransitionError):
        bisect_strain(w, 605.0, (-0.02, 0.02))


def test_bad_arguments():
    with pytest.raises(InvalidArgumentError):
        bisect_strain(lambda s: 600.0, 600.0, (0.01, -0.01))
    with pytest.raises(InvalidArgumentError):
        bisect_strain(lambda s: 600.0, 600.0, (-0.01, 0.01), tol_nm=0.0)
    with pytest.raises(InvalidArgumentError):
        sweep_function(lambda s: 2.0, [0.0, 0.06])
    with pytest.raises(NoTransitionError):
        sweep_function(lambda s: None, [0.0, 0.01])


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.019, 0.019), st.floats(100, 20000), st.sampled_from([-1, 1]))
def test_bisection_iteration_bound(root, slope, sign):
    res = bisect_strain(lambda s: 600 + sign * slope * (s - root), 600.0, (-0.02, 0.02), tol_nm=1e-9)
    assert res.iterations <= max_iterations((-0.02, 0.02))
    assert res.required_strain == pytest.approx(root, abs=2e-6)


def test_sweep_marks_gaps():
    curve = sweep_function(lambda s: None if s < -0.015 else 2.0 + s, np.linspace(-0.02, 0.02, 9))
    assert curve.gaps == [-0.02]
    # hc/E is curved even for a linear E(s).
    assert len(curve.valid) == 8 and curve.fit is not None and curve.fit.degree == 2


def test_hopping_only_model_scales_with_strain(params):
    # Graphene-like two-level system: onsite-degenerate, hopping only, U = 0.
    # The Gamma splitting 6 t(d) must follow 6 t0 (1+s)^-eta exactly.
    p = replace(params, U=0.0).with_onsite(B=0.0, N=0.0)

    def energy(s):
        e = np.linalg.eigvalsh(assemble_hamiltonian(pristine_cell(strain=s), p, (0.0, 0.0), 0))
        return e[1] - e[0]

    curve = sweep_function(energy, np.linspace(-0.02, 0.02, 5))
    for pt in curve.samples:
        expected = 6 * p.t0 * (1 + pt.s) ** -p.hopping_exponent
        assert pt.energy == pytest.approx(expected, abs=1e-10)
        assert pt.wavelength == pytest.approx(ev_to_nm(expected), rel=1e-10)
    assert curve.fit.coefficients[1] > 0  # longer bonds, smaller splitting, redder light
