import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbnscreen import kernels
from hbnscreen.electronic import TightBindingModel
from hbnscreen.geometry import LatticeSpec, apply_defect, build_supercell, spec

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def _model(params):
    cell = apply_defect(build_supercell(LatticeSpec(), 4, 4), spec("sub:B:C;vac:N"))
    return TightBindingModel(cell, params)


def test_python_bloch_matches_dense_loop(params):
    # Oracle: explicit loop over bonds.
    m = _model(params)
    k = np.array([[0.13, -0.27]])
    H = np.diag(m.onsite).astype(complex)
    for a, b, t, img in zip(m.bi, m.bj, m.hop, m.images):
        H[a, b] += t * np.exp(2j * np.pi * k[0] @ img)
    got = kernels.bloch_matrices(m.n, m.onsite, m.bi, m.bj, m.hop, m.images, k, backend="python")[0]
    np.testing.assert_allclose(got, H, atol=1e-13)


@compiled
def test_backends_agree_on_bloch(params):
    m = _model(params)
    rng = np.random.default_rng(1)
    k = rng.uniform(-0.5, 0.5, (7, 2))
    a = kernels.bloch_matrices(m.n, m.onsite, m.bi, m.bj, m.hop, m.images, k, backend="python")
    b = kernels.bloch_matrices(m.n, m.onsite, m.bi, m.bj, m.hop, m.images, k, backend="cython")
    np.testing.assert_allclose(a, b, atol=1e-13)


@compiled
@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=0, max_size=40), st.floats(0.01, 0.5))
def test_backends_agree_on_smearing(centers, sigma):
    w = np.linspace(0.5, 1.5, len(centers))
    grid = np.linspace(-6, 6, 301)
    a = kernels.gaussian_smear(centers, w, grid, sigma, backend="python")
    b = kernels.gaussian_smear(centers, w, grid, sigma, backend="cython")
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("backend", ["python", pytest.param("cython", marks=compiled)])
def test_smearing_unit_area(backend):
    grid = np.linspace(-2, 2, 4001)
    y = kernels.gaussian_smear([0.1], [1.0], grid, 0.05, backend=backend)
    assert np.trapezoid(y, grid) == pytest.approx(1.0, rel=1e-6)
    # Peak height of a renormalised 3-sigma Gaussian.
    peak = 1 / (0.05 * math.sqrt(2 * math.pi) * math.erf(3 / math.sqrt(2)))
    assert y.max() == pytest.approx(peak, rel=1e-6)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.bloch_matrices(1, [0.0], [], [], [], np.zeros((0, 2)), [[0, 0]], backend="fortran")
    with pytest.raises(ValueError):
        kernels.gaussian_smear([0.0], [1.0], [1.0, 0.0], 0.1)


def test_fallback_selected_by_environment():
    code = "import hbnscreen.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"HBNSCREEN_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"
