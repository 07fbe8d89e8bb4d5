"""Horn-Schunck optical flow.

`horn_schunck(a, b)` returns the field f with warp(b, f) ~= a; that one
direction convention is used everywhere in the package ("the flow A->B
pulls B onto A"). The solver iterates simultaneous (Jacobi) per-pixel
solves of the Euler-Lagrange system of the quadratic energy measured by
:func:`hs_energy`; each sweep is an exact block-Jacobi step for that
discrete energy, so the per-level energy trace is non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import (
    as_image,
    convolve_gaussian,
    resize_bilinear,
    rmse,
    spatial_gradient,
    temporal_derivative,
    warp,
)

# Pyramid levels are not built below this edge length.
_MIN_LEVEL_SIZE = 8


@dataclass
class HSParams:
    """Solver configuration.

    alpha is the smoothness weight on [0, 1] intensities; tol stops a
    level once the mean per-pixel update magnitude (in px) drops below
    it. With pyramid_levels = 1 the solver runs single-scale.
    """

    alpha: float = 0.02
    max_iters: int = 500
    tol: float = 1e-4
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError(f"pyramid_scale must be in (0, 1), got {self.pyramid_scale}")


def _derivatives(a, b):
    """(Ix, Iy, It) for a frame pair: averaged spatial gradients, b - a."""
    ax, ay = spatial_gradient(a)
    bx, by = spatial_gradient(b)
    return 0.5 * (ax + bx), 0.5 * (ay + by), temporal_derivative(a, b)


def _neighbor_degree(height, width):
    deg = np.full((height, width), 4.0)
    deg[0, :] -= 1.0
    deg[-1, :] -= 1.0
    deg[:, 0] -= 1.0
    deg[:, -1] -= 1.0
    return deg


def _energy_from_fields(ix, iy, it, u, v, alpha) -> float:
    data = ix * u + iy * v + it
    reg = 0.0
    for comp in (u, v):
        reg += np.sum((comp[:, 1:] - comp[:, :-1]) ** 2)
        reg += np.sum((comp[1:, :] - comp[:-1, :]) ** 2)
    return float(np.sum(data * data) + alpha * reg)


def hs_energy(a, b, flow, alpha: float) -> float:
    """Discrete Horn-Schunck energy of a flow for the frame pair (a, b).

    Sum over pixels of (u*Ix + v*Iy + It)^2 + alpha*(|grad u|^2 +
    |grad v|^2), with the flow gradients taken as forward differences
    (zero at the last row/column) and the image derivatives computed as
    in the solver.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape != a.shape + (2,):
        raise ValueError(f"flow shape {flow.shape} does not match frames {a.shape}")
    ix, iy, it = _derivatives(a, b)
    return _energy_from_fields(ix, iy, it, flow[..., 0], flow[..., 1], alpha)


def _solve_level(a, b, params, diag, level):
    ix, iy, it = _derivatives(a, b)
    deg = _neighbor_degree(*a.shape)
    inv_deg = 1.0 / deg
    denom = params.alpha * deg + ix * ix + iy * iy
    u = np.zeros(a.shape)
    v = np.zeros(a.shape)
    if diag is not None:
        e = _energy_from_fields(ix, iy, it, u, v, params.alpha)
        diag.write(f"{level},0,{e!r},0.0\n")
    for i in range(1, params.max_iters + 1):
        u, v, upd = kernels.hs_sweep(ix, iy, it, denom, inv_deg, u, v)
        if diag is not None:
            e = _energy_from_fields(ix, iy, it, u, v, params.alpha)
            diag.write(f"{level},{i},{e!r},{upd!r}\n")
        if upd < params.tol:
            break
    return u, v


def _pyramid(img, levels, scale):
    pyr = [img]
    # anti-alias sigma keeps the resampled band limit, ~0 as scale -> 1
    sigma = 0.6 * math.sqrt(max(1.0 / (scale * scale) - 1.0, 0.0))
    for _ in range(levels - 1):
        prev = pyr[-1]
        nh = max(2, int(round(prev.shape[0] * scale)))
        nw = max(2, int(round(prev.shape[1] * scale)))
        if min(nh, nw) < _MIN_LEVEL_SIZE or (nh, nw) == prev.shape:
            break
        pyr.append(resize_bilinear(convolve_gaussian(prev, sigma), nh, nw))
    return pyr


def horn_schunck(a, b, params: HSParams | None = None, diag=None) -> np.ndarray:
    """Optical flow f between frames a and b such that warp(b, f) ~= a.

    Runs coarse-to-fine when params.pyramid_levels > 1: each finer level
    warps b by the upsampled flow (components scaled by
    1/pyramid_scale) and solves for the residual from a zero field.
    When `diag` is a writable stream, one CSV line
    "level,iteration,energy,mean_update" is emitted per sweep (level 0
    is the finest; iteration 0 is the initial state).
    """
    params = params or HSParams()
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if diag is not None:
        diag.write("level,iteration,energy,mean_update\n")
    pa = _pyramid(a, params.pyramid_levels, params.pyramid_scale)
    pb = _pyramid(b, params.pyramid_levels, params.pyramid_scale)
    u = v = None
    for li in reversed(range(len(pa))):
        al, bl = pa[li], pb[li]
        if u is None:
            bw = bl
            u = np.zeros(al.shape)
            v = np.zeros(al.shape)
        else:
            u = resize_bilinear(u, *al.shape) / params.pyramid_scale
            v = resize_bilinear(v, *al.shape) / params.pyramid_scale
            bw = warp(bl, np.stack((u, v), axis=-1))
        du, dv = _solve_level(al, bw, params, diag, li)
        u = u + du
        v = v + dv
    return np.stack((u, v), axis=-1)


def flow_residual(a, b, flow) -> float:
    """RMSE of warp(b, flow) against a: the registration quality metric."""
    a = as_image(a)
    return rmse(warp(b, flow), a)
