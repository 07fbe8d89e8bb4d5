#!/usr/bin/env python3
"""Time the numba kernels against their pure-NumPy fallbacks.

Usage: python benchmarks/bench_kernels.py [--size 256] [--reps 5]

Runs each hot kernel on same-sized random inputs through both paths and
prints per-call times and the speedup. Requires numba; the NumPy path is
always available (it is what you get with DETURB_NO_NUMBA=1).
"""

import argparse
import time

import numpy as np

from deturb import kernels
from deturb.nltv import patch_mask


def timeit(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=256, help="grid edge length")
    parser.add_argument("--reps", type=int, default=5, help="repetitions (best-of)")
    args = parser.parse_args()

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    n = args.size
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, (n, n))
    u = rng.uniform(-3, 3, (n, n))
    v = rng.uniform(-3, 3, (n, n))

    ix = rng.uniform(-1, 1, (n, n))
    iy = rng.uniform(-1, 1, (n, n))
    it = rng.uniform(-1, 1, (n, n))
    deg = np.full((n, n), 4.0)
    deg[0] -= 1
    deg[-1] -= 1
    deg[:, 0] -= 1
    deg[:, -1] -= 1
    denom = 0.02 * deg + ix * ix + iy * iy
    inv_deg = 1.0 / deg

    nlm_size = min(n, 128)  # the scan is quadratic in window area; keep it sane
    nlm_img = rng.uniform(0, 1, (nlm_size, nlm_size))
    g2d = patch_mask(1.0, 2)

    npix = n * n
    keep = 10
    indptr = np.arange(0, npix * keep + 1, keep, dtype=np.int64)
    indices = rng.integers(0, npix, npix * keep).astype(np.int64)
    weights = rng.uniform(0.01, 1.0, npix * keep)
    uflat = img.ravel().copy()
    r = kernels._nltv_sqrt_terms_numpy(uflat, indptr, indices, weights, 1e-8)

    cases = [
        (
            f"warp_bilinear {n}x{n}",
            lambda: kernels._warp_bilinear_numpy(img, u, v),
            lambda: kernels._warp_bilinear_numba(img, u, v),
        ),
        (
            f"hs_sweep {n}x{n}",
            lambda: kernels._hs_sweep_numpy(ix, iy, it, denom, inv_deg, u, v),
            lambda: kernels._hs_sweep_numba(ix, iy, it, denom, inv_deg, u, v),
        ),
        (
            f"nlm_scan {nlm_size}x{nlm_size} w15 k10",
            lambda: kernels._nlm_scan_numpy(nlm_img, 2, 7, g2d, 10),
            lambda: kernels._nlm_scan_numba(nlm_img, 2, 7, g2d, 10),
        ),
        (
            f"nltv_sqrt_terms {n}x{n} k10",
            lambda: kernels._nltv_sqrt_terms_numpy(uflat, indptr, indices, weights, 1e-8),
            lambda: kernels._nltv_sqrt_terms_numba(uflat, indptr, indices, weights, 1e-8),
        ),
        (
            f"nltv_reg_grad {n}x{n} k10",
            lambda: kernels._nltv_reg_grad_numpy(uflat, indptr, indices, weights, r),
            lambda: kernels._nltv_reg_grad_numba(uflat, indptr, indices, weights, r),
        ),
    ]

    print(f"{'kernel':<34} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, np_fn, nb_fn in cases:
        nb_fn()  # compile outside the timed region
        t_np = timeit(np_fn, args.reps)
        t_nb = timeit(nb_fn, args.reps)
        print(f"{name:<34} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
