"""Hot inner-loop kernels: numba-jitted, with pure-NumPy fallbacks.

The backend is chosen once at import time. Set DETURB_NO_NUMBA=1 to force
the NumPy path; it is also used automatically when numba is not
importable. Both paths perform the same arithmetic in the same order per
pixel, so they agree to the last bits (tests pin the gap at 1e-13).

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("DETURB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - CI always has numba; env flag covers this path
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not _FORCE_NUMPY


def backend() -> str:
    """Name of the active kernel backend, "numba" or "numpy"."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# backward bilinear warp
# ---------------------------------------------------------------------------

def _warp_bilinear_numpy(img, u, v):
    hh, ww = img.shape
    sx = np.minimum(np.maximum(np.arange(ww, dtype=np.float64)[None, :] + u, 0.0), ww - 1.0)
    sy = np.minimum(np.maximum(np.arange(hh, dtype=np.float64)[:, None] + v, 0.0), hh - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, ww - 1)
    y1 = np.minimum(y0 + 1, hh - 1)
    fx = sx - x0
    fy = sy - y0
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1.0 - fy) * top + fy * bot


def _warp_bilinear_loop(img, u, v):
    hh, ww = img.shape
    out = np.empty((hh, ww), dtype=np.float64)
    for y in range(hh):
        for x in range(ww):
            sx = min(max(x + u[y, x], 0.0), ww - 1.0)
            sy = min(max(y + v[y, x], 0.0), hh - 1.0)
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            x1 = min(x0 + 1, ww - 1)
            y1 = min(y0 + 1, hh - 1)
            fx = sx - x0
            fy = sy - y0
            top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
            bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
            out[y, x] = (1.0 - fy) * top + fy * bot
    return out


# ---------------------------------------------------------------------------
# Horn-Schunck Jacobi sweep
#
# One simultaneous update of the per-pixel 2x2 systems. `denom` and
# `inv_deg` are precomputed per solve: denom = alpha*deg + Ix^2 + Iy^2,
# inv_deg = 1/deg with deg the number of in-grid 4-neighbours.
# ---------------------------------------------------------------------------

def _hs_sweep_numpy(ix, iy, it, denom, inv_deg, u, v):
    su = np.zeros_like(u)
    sv = np.zeros_like(v)
    su[1:, :] += u[:-1, :]
    sv[1:, :] += v[:-1, :]
    su[:-1, :] += u[1:, :]
    sv[:-1, :] += v[1:, :]
    su[:, 1:] += u[:, :-1]
    sv[:, 1:] += v[:, :-1]
    su[:, :-1] += u[:, 1:]
    sv[:, :-1] += v[:, 1:]
    mu = su * inv_deg
    mv = sv * inv_deg
    q = (ix * mu + iy * mv + it) / denom
    un = mu - ix * q
    vn = mv - iy * q
    du = un - u
    dv = vn - v
    upd = float(np.mean(np.sqrt(du * du + dv * dv)))
    return un, vn, upd


def _hs_sweep_loop(ix, iy, it, denom, inv_deg, u, v):
    hh, ww = u.shape
    un = np.empty((hh, ww), dtype=np.float64)
    vn = np.empty((hh, ww), dtype=np.float64)
    acc = 0.0
    for y in range(hh):
        for x in range(ww):
            su = 0.0
            sv = 0.0
            if y > 0:
                su += u[y - 1, x]
                sv += v[y - 1, x]
            if y < hh - 1:
                su += u[y + 1, x]
                sv += v[y + 1, x]
            if x > 0:
                su += u[y, x - 1]
                sv += v[y, x - 1]
            if x < ww - 1:
                su += u[y, x + 1]
                sv += v[y, x + 1]
            mu = su * inv_deg[y, x]
            mv = sv * inv_deg[y, x]
            q = (ix[y, x] * mu + iy[y, x] * mv + it[y, x]) / denom[y, x]
            uu = mu - ix[y, x] * q
            vv = mv - iy[y, x] * q
            du = uu - u[y, x]
            dv = vv - v[y, x]
            acc += np.sqrt(du * du + dv * dv)
            un[y, x] = uu
            vn[y, x] = vv
    return un, vn, acc / (hh * ww)


# ---------------------------------------------------------------------------
# patch-distance scan for the nonlocal weight graph
#
# For every pixel, scans the search window, computes the Gaussian-weighted
# L1 patch distance to each candidate (patch samples clamped to the image
# border) and keeps the `k` smallest. Ties are broken toward the earlier
# candidate in raster order, identically in both backends. Missing
# candidates (image border, fewer than k valid) are padded with
# neighbour -1 / distance +inf.
# ---------------------------------------------------------------------------

def _nlm_scan_numpy(f, patch_radius, window_radius, g2d, k):
    hh, ww = f.shape
    rp = patch_radius
    rw = window_radius
    pad = rp + rw
    fp = np.pad(f, pad, mode="edge")
    offsets = [
        (dy, dx)
        for dy in range(-rw, rw + 1)
        for dx in range(-rw, rw + 1)
        if not (dy == 0 and dx == 0)
    ]
    n_off = len(offsets)
    dist = np.empty((n_off, hh, ww), dtype=np.float64)
    for o, (dy, dx) in enumerate(offsets):
        acc = np.zeros((hh, ww), dtype=np.float64)
        for ty in range(-rp, rp + 1):
            for tx in range(-rp, rp + 1):
                a = fp[pad + ty : pad + ty + hh, pad + tx : pad + tx + ww]
                b = fp[pad + dy + ty : pad + dy + ty + hh, pad + dx + tx : pad + dx + tx + ww]
                acc += g2d[ty + rp, tx + rp] * np.abs(a - b)
        if dy > 0:
            acc[hh - dy :, :] = np.inf
        elif dy < 0:
            acc[: -dy, :] = np.inf
        if dx > 0:
            acc[:, ww - dx :] = np.inf
        elif dx < 0:
            acc[:, : -dx] = np.inf
        dist[o] = acc

    flat = dist.reshape(n_off, hh * ww)
    kk = min(k, n_off)
    order = np.argsort(flat, axis=0, kind="stable")[:kk]
    dsel = np.take_along_axis(flat, order, axis=0)
    off_lin = np.array([dy * ww + dx for dy, dx in offsets], dtype=np.int64)
    nbr = np.arange(hh * ww, dtype=np.int64)[None, :] + off_lin[order]
    nbr[~np.isfinite(dsel)] = -1
    nbr = np.ascontiguousarray(nbr.T)
    dsel = np.ascontiguousarray(dsel.T)
    if kk < k:
        nbr = np.hstack([nbr, np.full((hh * ww, k - kk), -1, dtype=np.int64)])
        dsel = np.hstack([dsel, np.full((hh * ww, k - kk), np.inf)])
    return nbr, dsel


def _nlm_scan_loop(f, patch_radius, window_radius, g2d, k):
    hh, ww = f.shape
    rp = patch_radius
    rw = window_radius
    n = hh * ww
    nbr = np.full((n, k), -1, dtype=np.int64)
    dist = np.full((n, k), np.inf, dtype=np.float64)
    for y in range(hh):
        for x in range(ww):
            p = y * ww + x
            for dy in range(-rw, rw + 1):
                yy = y + dy
                if yy < 0 or yy >= hh:
                    continue
                for dx in range(-rw, rw + 1):
                    if dy == 0 and dx == 0:
                        continue
                    xx = x + dx
                    if xx < 0 or xx >= ww:
                        continue
                    d = 0.0
                    for ty in range(-rp, rp + 1):
                        ay = min(max(y + ty, 0), hh - 1)
                        by = min(max(yy + ty, 0), hh - 1)
                        for tx in range(-rp, rp + 1):
                            ax = min(max(x + tx, 0), ww - 1)
                            bx = min(max(xx + tx, 0), ww - 1)
                            d += g2d[ty + rp, tx + rp] * abs(f[ay, ax] - f[by, bx])
                    if d < dist[p, k - 1]:
                        j = k - 1
                        while j > 0 and d < dist[p, j - 1]:
                            dist[p, j] = dist[p, j - 1]
                            nbr[p, j] = nbr[p, j - 1]
                            j -= 1
                        dist[p, j] = d
                        nbr[p, j] = yy * ww + xx
    return nbr, dist


# ---------------------------------------------------------------------------
# nonlocal-TV regularizer terms on the sparse weight graph (CSR arrays)
# ---------------------------------------------------------------------------

def _nltv_sqrt_terms_numpy(u, indptr, indices, w, eps):
    n = u.shape[0]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    d = u[rows] - u[indices]
    s = np.bincount(rows, weights=w * d * d, minlength=n)
    return np.sqrt(eps * eps + s)


def _nltv_sqrt_terms_loop(u, indptr, indices, w, eps):
    n = u.shape[0]
    r = np.empty(n, dtype=np.float64)
    for p in range(n):
        s = 0.0
        for e in range(indptr[p], indptr[p + 1]):
            d = u[p] - u[indices[e]]
            s += w[e] * d * d
        r[p] = np.sqrt(eps * eps + s)
    return r


def _nltv_reg_grad_numpy(u, indptr, indices, w, r):
    n = u.shape[0]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    d = u[rows] - u[indices]
    coef = w * d * (1.0 / r[rows] + 1.0 / r[indices])
    return np.bincount(rows, weights=coef, minlength=n)


def _nltv_reg_grad_loop(u, indptr, indices, w, r):
    n = u.shape[0]
    g = np.zeros(n, dtype=np.float64)
    for p in range(n):
        acc = 0.0
        for e in range(indptr[p], indptr[p + 1]):
            q = indices[e]
            acc += w[e] * (u[p] - u[q]) * (1.0 / r[p] + 1.0 / r[q])
        g[p] = acc
    return g


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _warp_bilinear_numba = njit(cache=True)(_warp_bilinear_loop)
    _hs_sweep_numba = njit(cache=True)(_hs_sweep_loop)
    _nlm_scan_numba = njit(cache=True)(_nlm_scan_loop)
    _nltv_sqrt_terms_numba = njit(cache=True)(_nltv_sqrt_terms_loop)
    _nltv_reg_grad_numba = njit(cache=True)(_nltv_reg_grad_loop)

if NUMBA_ENABLED:
    warp_bilinear = _warp_bilinear_numba
    hs_sweep = _hs_sweep_numba
    nlm_scan = _nlm_scan_numba
    nltv_sqrt_terms = _nltv_sqrt_terms_numba
    nltv_reg_grad = _nltv_reg_grad_numba
else:
    warp_bilinear = _warp_bilinear_numpy
    hs_sweep = _hs_sweep_numpy
    nlm_scan = _nlm_scan_numpy
    nltv_sqrt_terms = _nltv_sqrt_terms_numpy
    nltv_reg_grad = _nltv_reg_grad_numpy
