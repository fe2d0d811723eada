"""Compare the compiled and pure-numpy kernel backends on realistic inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from hbnscreen import kernels
from hbnscreen.electronic import TightBindingModel
from hbnscreen.geometry import LatticeSpec, apply_defect, build_supercell, spec
from hbnscreen.kspace import gamma_centered
from hbnscreen.params import default_params


def cases():
    cell = apply_defect(build_supercell(LatticeSpec(), 7, 7), spec("sub:B:S;vac:B"))
    m = TightBindingModel(cell, default_params())
    kpts = gamma_centered(11, 11).points
    rng = np.random.default_rng(0)
    centers = rng.uniform(0, 12, 98 * 98)
    weights = rng.uniform(0, 1, centers.size)
    grid = np.arange(0, 12.0001, 0.01)
    yield ("bloch_matrices 7x7, 121 k", lambda b: kernels.bloch_matrices(
        m.n, m.onsite, m.bi, m.bj, m.hop, m.images, kpts, backend=b))
    yield ("gaussian_smear 9604 peaks", lambda b: kernels.gaussian_smear(
        centers, weights, grid, 0.05, backend=b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"{'kernel':32s} " + " ".join(f"{b:>12s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name, fn in cases():
        ref = fn("python")
        times = []
        for b in backends:
            np.testing.assert_allclose(fn(b), ref, atol=1e-12)
            times.append(min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)))
        line = f"{name:32s} " + " ".join(f"{1e3 * t:10.2f}ms" for t in times)
        if len(times) == 2:
            line += f"   {times[0] / times[1]:6.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
