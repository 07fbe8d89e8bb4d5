"""Grid primitives shared by the whole pipeline.

Images are 2-D float64 arrays (rows = y, columns = x); intensities are
normalized to [0, 1] at ingestion (see :mod:`deturb.io`) but the
operations here work on any finite values, so they can also run on flow
components. Flow fields are (H, W, 2) arrays with ``flow[..., 0]`` the
horizontal displacement u and ``flow[..., 1]`` the vertical
displacement v, both in pixel units.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from . import kernels


def as_image(arr) -> np.ndarray:
    """Validate and return a 2-D float64 image (H, W >= 2, all finite)."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"image must be at least 2x2, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def as_flow(arr) -> np.ndarray:
    """Validate and return an (H, W, 2) float64 flow field."""
    f = np.asarray(arr, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ValueError(f"flow field must have shape (H, W, 2), got {f.shape}")
    if f.shape[0] < 2 or f.shape[1] < 2:
        raise ValueError(f"flow field must be at least 2x2, got {f.shape[:2]}")
    if not np.all(np.isfinite(f)):
        raise ValueError("flow field contains non-finite values")
    return f


def as_sequence(frames) -> list[np.ndarray]:
    """Validate a frame sequence: >= 2 frames, identical dimensions."""
    seq = [as_image(f) for f in frames]
    if len(seq) < 2:
        raise ValueError(f"sequence needs at least 2 frames, got {len(seq)}")
    shape = seq[0].shape
    for i, f in enumerate(seq):
        if f.shape != shape:
            raise ValueError(f"frame {i} has shape {f.shape}, expected {shape}")
    return seq


def zero_flow(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width, 2), dtype=np.float64)


def rmse(a, b) -> float:
    """Root-mean-square difference between two same-shaped arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def flow_rms(flow) -> float:
    """sqrt(mean(u^2 + v^2)) over all pixels of a flow field."""
    f = as_flow(flow)
    return float(np.sqrt(np.mean(f[..., 0] ** 2 + f[..., 1] ** 2)))


def spatial_gradient(img):
    """Per-pixel (Ix, Iy): central differences inside, one-sided at the border."""
    img = as_image(img)
    iy, ix = np.gradient(img)
    return ix, iy


def temporal_derivative(a, b) -> np.ndarray:
    """Forward difference b - a across a frame pair."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return b - a


def sample_bilinear(img, x: float, y: float) -> float:
    """Bilinear sample of img at real coordinates (x, y).

    Coordinates outside [0, W-1] x [0, H-1] are clamped to the border
    before interpolation; integer coordinates return the pixel exactly.
    """
    img = as_image(img)
    hh, ww = img.shape
    sx = min(max(float(x), 0.0), ww - 1.0)
    sy = min(max(float(y), 0.0), hh - 1.0)
    x0 = int(math.floor(sx))
    y0 = int(math.floor(sy))
    x1 = min(x0 + 1, ww - 1)
    y1 = min(y0 + 1, hh - 1)
    fx = sx - x0
    fy = sy - y0
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return float((1.0 - fy) * top + fy * bot)


def warp(img, flow) -> np.ndarray:
    """Backward warp: out(x) = img sampled bilinearly at x + flow(x).

    Out-of-domain sample positions are clamped to the border. A zero
    flow reproduces the input bit-for-bit.
    """
    img = as_image(img)
    flow = as_flow(flow)
    if flow.shape[:2] != img.shape:
        raise ValueError(f"flow shape {flow.shape[:2]} does not match image {img.shape}")
    u = np.ascontiguousarray(flow[..., 0])
    v = np.ascontiguousarray(flow[..., 1])
    return kernels.warp_bilinear(img, u, v)


def temporal_mean(frames) -> np.ndarray:
    """Pixelwise arithmetic mean of a frame sequence.

    Computed relative to the first frame so that an all-identical stack
    is returned bit-exactly.
    """
    seq = as_sequence(frames)
    stack = np.stack(seq, axis=0)
    first = stack[0]
    return first + np.mean(stack - first, axis=0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps, truncated at radius ceil(3*sigma), unit sum.

    sigma = 0 yields the identity kernel [1.0].
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma)) if sigma > 0 else 0
    if radius == 0:
        return np.ones(1, dtype=np.float64)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def convolve_gaussian(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders.

    The kernel is truncated at radius ceil(3*sigma) and renormalized to
    unit sum, so constant images are preserved; sigma = 0 is a no-op.
    """
    img = as_image(img)
    k = gaussian_kernel(sigma)
    if k.size == 1:
        return img.copy()
    out = correlate1d(img, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def resize_bilinear(img, height: int, width: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and clamped sampling."""
    img = as_image(img)
    hh, ww = img.shape
    if height < 2 or width < 2:
        raise ValueError(f"target size must be at least 2x2, got {(height, width)}")
    sy = np.clip((np.arange(height, dtype=np.float64) + 0.5) * (hh / height) - 0.5, 0.0, hh - 1.0)
    sx = np.clip((np.arange(width, dtype=np.float64) + 0.5) * (ww / width) - 0.5, 0.0, ww - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, hh - 1)
    x1 = np.minimum(x0 + 1, ww - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = (1.0 - fx) * img[np.ix_(y0, x0)] + fx * img[np.ix_(y0, x1)]
    bot = (1.0 - fx) * img[np.ix_(y1, x0)] + fx * img[np.ix_(y1, x1)]
    return (1.0 - fy) * top + fy * bot
