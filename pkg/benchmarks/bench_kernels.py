#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--size 500000] [--repeat 5]

The active backend for the package is chosen by QUC_KERNELS; this script
imports both implementations directly, so it works regardless of the flag.
"""

import argparse
import time

import numpy as np

from quc import _kernels


def _time(fn, *args, repeat):
    fn(*args)  # warm up (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=500_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    m = args.size
    z = np.ascontiguousarray(rng.uniform(-5, 5, (m, 2)))
    h = np.ascontiguousarray(rng.uniform(-1, 1, (m, 2, 2)))
    h = h + np.transpose(h, (0, 2, 1))
    ntri = m
    nn = m // 2
    idx = np.ascontiguousarray(rng.integers(0, nn, (ntri, 3)))
    contrib = np.ascontiguousarray(rng.uniform(-1, 1, (ntri, 3)))
    g = np.ascontiguousarray(rng.uniform(-1, 1, (ntri, 3, 2)))
    area = np.ascontiguousarray(rng.uniform(0.1, 1.0, ntri))

    cases = [
        ("power_eval", (z, 3.0)),
        ("power_grad", (z, 3.0)),
        ("power_hess", (z, 3.0)),
        ("sym2_eig_bounds", (h,)),
        ("scatter_add3", (idx, contrib)),
        ("tri_local_hess", (g, h, area)),
    ]

    print(f"size = {m}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, a in cases:
        np_fn = _kernels.NUMPY_IMPLS[name]
        nb_fn = getattr(_kernels, f"_nb_{name}")
        if name == "scatter_add3":
            t_np = _time(lambda i, c: np_fn(i, c, np.zeros(nn)), *a, repeat=args.repeat)
            t_nb = _time(lambda i, c: nb_fn(i, c, np.zeros(nn)), *a, repeat=args.repeat)
        else:
            t_np = _time(np_fn, *a, repeat=args.repeat)
            t_nb = _time(nb_fn, *a, repeat=args.repeat)
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.2f}")


if __name__ == "__main__":
    main()
