"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels (separable Gaussian convolution, cubic spline
prefilter, exact distance transform) and one full refinement on a phantom
case, under both backends. The numba path gets an unmeasured warmup so JIT
compilation stays out of the numbers. If numba is missing only the numpy
path runs.

    python benchmarks/bench_backends.py [--size 96] [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from hac_refine import backend
from hac_refine import _kernels
from hac_refine.gauss import KernelSpec
from hac_refine.grid import binarize
from hac_refine.hybrid_ac import HybridACParams, refine
from hac_refine.phantom import MemberPerturbation, PhantomSpec, make_phantom
from hac_refine.preprocess import zscore
from hac_refine.uncertainty import EnsemblePrediction


def make_workloads(size, seed=123):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(size, size, size))
    mask = rng.random(size=(size, size, size)) < 0.001
    mask[size // 2, size // 2, size // 2] = True
    weights = np.exp(-0.5 * (np.arange(-12, 13) / 3.0) ** 2)
    weights /= weights.sum()

    shifts = [(2, 0, 0), (-2, 0, 0), (0, 2, 0), (0, -2, 0), (0, 0, 2)]
    spec = PhantomSpec(
        shape=(48, 48, 48),
        center_mm=(23.5, 23.5, 23.5),
        radii_mm=(10.0, 10.0, 10.0),
        member_perturbations=tuple(MemberPerturbation(shift_mm=s) for s in shifts),
        seed=seed,
    )
    case = make_phantom(spec)
    fused = EnsemblePrediction.from_members(case.members).fused
    refine_args = (zscore(case.pet), zscore(case.ct), fused, binarize(fused, 0.5))

    return {
        "gaussian conv (sigma 3)": lambda: _kernels.conv_axis(data, weights, 1),
        "spline prefilter": lambda: _kernels.spline_filter_axis(data, 1),
        "exact EDT": lambda: _kernels.edt_squared(mask, (1.0, 1.0, 1.0)),
        "refine 48^3 phantom": lambda: refine(
            *refine_args, HybridACParams(max_iter=10)
        ),
    }


def time_workload(fn, repeats):
    durations = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        durations.append(time.perf_counter() - t0)
    return durations


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=96, help="kernel workload edge length")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = ["numpy"]
    if backend._numba_available():
        backends.append("numba")
    else:
        print("[info] numba not installed; timing the numpy path only")

    results = {}
    for name in backends:
        backend.set_backend(name)
        workloads = make_workloads(args.size)
        if name == "numba":
            print("[warmup] compiling numba kernels (not timed)")
            for fn in workloads.values():
                fn()
        for label, fn in workloads.items():
            durations = time_workload(fn, args.repeats)
            results[(label, name)] = durations
    backend.set_backend("auto")

    width = max(len(label) for label, _ in results)
    print(f"\n{'workload':<{width}}  {'backend':>7}  {'mean (s)':>9}  {'std':>8}  speedup")
    print("-" * (width + 42))
    labels = dict.fromkeys(label for label, _ in results)
    for label in labels:
        base = statistics.mean(results[(label, "numpy")])
        for name in backends:
            durations = results[(label, name)]
            mean = statistics.mean(durations)
            std = statistics.pstdev(durations)
            speed = f"{base / mean:5.2f}x" if name == "numba" else "  1.00x"
            print(f"{label:<{width}}  {name:>7}  {mean:9.4f}  {std:8.4f}  {speed}")


if __name__ == "__main__":
    main()
