"""Time the numba and numpy stepping kernels on the same problem.

    python3 benchmarks/bench_kernels.py [--k-max 2] [--steps 2000]
"""
import argparse
import time

import numpy as np

from nsgalerkin import _kernels
from nsgalerkin.basis import RandomSpectrum
from nsgalerkin.tensor import basis_and_tensor


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-max", type=int, default=2)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--cache-dir")
    args = ap.parse_args(argv)

    basis, tensor = basis_and_tensor(args.k_max, args.cache_dir)
    c = RandomSpectrum(energy=1.0, seed=1).coefficients(basis)
    nu_lam = 0.1 * np.asarray(basis.eigenvalues, dtype=float)
    w = np.zeros(basis.m)
    w[0] = 1.0
    bstage = np.full((args.steps, 3), 0.5)
    dt = 1e-3
    arrays = (tensor.indptr, tensor.p_idx, tensor.q_idx, tensor.values)

    print(f"k_max={args.k_max} m={basis.m} nnz={tensor.nnz} steps={args.steps}")
    if not _kernels.HAS_NUMBA:
        print("numba unavailable (or disabled); timing numpy only")
    results = {}
    for name, table in (("numpy", _kernels.NUMPY_KERNELS), ("numba", _kernels.NUMBA_KERNELS)):
        if table is None:
            continue
        for scheme in ("rk4_advance", "ifrk4_advance"):
            fn = table[scheme]
            fn(c, nu_lam, *arrays, w, bstage[:1], dt)  # compile / warm up
            sec, (out, bad) = _time(lambda: fn(c, nu_lam, *arrays, w, bstage, dt), args.repeat)
            results[name, scheme] = out
            print(f"{name:6s} {scheme:14s} {sec * 1e3:9.2f} ms  {sec / args.steps * 1e6:8.2f} us/step")
    for scheme in ("rk4_advance", "ifrk4_advance"):
        if ("numba", scheme) in results:
            diff = np.max(np.abs(results["numba", scheme] - results["numpy", scheme]))
            print(f"max |numba - numpy| after {args.steps} steps ({scheme}): {diff:.2e}")


if __name__ == "__main__":
    main()
