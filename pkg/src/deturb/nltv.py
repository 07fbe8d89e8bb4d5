"""Nonlocal total-variation deconvolution.

Sharpens the registered mean by minimizing

    E[u] = sum (f - k*u)^2 + alpha * sum_x sqrt(sum_y (u_x - u_y)^2 w(x,y) + eps^2)

where k is a Gaussian blur kernel applied with clamp-to-edge borders and
w is a sparse symmetric patch-similarity weight graph built once from
the data f. Minimization is plain gradient descent with a backtracking
line search, so the recorded energy trace is strictly decreasing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.ndimage import correlate1d

from . import kernels
from .grid import as_image, gaussian_kernel

# smoothing of the square root at zero; the finite-difference gradient
# check loosens this via the explicit eps argument
EPS_SMOOTH = 1e-8

GRAPH_MAGIC = b"NLTW"


@dataclass
class NLTVParams:
    alpha: float = 0.002
    h: float = 0.05
    a: float = 1.0
    patch_radius: int = 2
    window_radius: int = 7
    kernel_sigma: float = 1.0
    max_iters: int = 150
    step0: float = 0.25
    weight_keep: int = 10

    def __post_init__(self):
        for name in ("alpha", "h", "a", "step0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.kernel_sigma < 0:
            raise ValueError(f"kernel_sigma must be >= 0, got {self.kernel_sigma}")
        if self.patch_radius < 1 or self.window_radius < 1:
            raise ValueError("patch_radius and window_radius must be >= 1")
        if self.patch_radius > self.window_radius:
            raise ValueError(
                f"patch_radius {self.patch_radius} exceeds window_radius {self.window_radius}"
            )
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.weight_keep < 1:
            raise ValueError(f"weight_keep must be >= 1, got {self.weight_keep}")


@dataclass
class WeightGraph:
    """Sparse symmetric pixel-pair weights in CSR form over flat indices."""

    height: int
    width: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def patch_mask(a: float, patch_radius: int) -> np.ndarray:
    """2-D Gaussian patch mask with std dev `a`, normalized to unit sum."""
    t = np.arange(-patch_radius, patch_radius + 1, dtype=np.float64)
    g1 = np.exp(-0.5 * (t / a) ** 2)
    g2 = np.outer(g1, g1)
    return g2 / g2.sum()


def build_weights(f, params: NLTVParams | None = None) -> WeightGraph:
    """Patch-similarity graph of f: w(x,y) = exp(-d(x,y)/h^2).

    d(x,y) is the Gaussian-weighted mean absolute difference of the
    patches around x and y (patch samples clamped at the border). For
    each pixel the weight_keep nearest candidates inside the search
    window are kept (the pixel itself excluded); the graph is then
    symmetrized by union.
    """
    params = params or NLTVParams()
    f = as_image(f)
    hh, ww = f.shape
    g2d = patch_mask(params.a, params.patch_radius)
    nbr, dist = kernels.nlm_scan(
        f, params.patch_radius, params.window_radius, g2d, params.weight_keep
    )
    mask = nbr.ravel() >= 0
    n = hh * ww
    rows = np.repeat(np.arange(n, dtype=np.int64), nbr.shape[1])[mask]
    cols = nbr.ravel()[mask]
    w = np.exp(-dist.ravel()[mask] / (params.h * params.h))
    a = sparse.csr_matrix((w, (rows, cols)), shape=(n, n))
    sym = a.maximum(a.T).tocsr()
    sym.sort_indices()
    return WeightGraph(
        hh,
        ww,
        sym.indptr.astype(np.int64),
        sym.indices.astype(np.int64),
        sym.data.astype(np.float64),
    )


def _blur(img, kern):
    if kern.size == 1:
        return img * kern[0]
    out = correlate1d(img, kern, axis=0, mode="nearest")
    return correlate1d(out, kern, axis=1, mode="nearest")


def _adjoint_axis0(arr, kern):
    r = kern.size // 2
    n = arr.shape[0]
    padded = np.zeros((n + 2 * r,) + arr.shape[1:])
    padded[r : r + n] = arr
    w = correlate1d(padded, kern, axis=0, mode="constant", cval=0.0)
    core = w[r : r + n].copy()
    core[0] += w[:r].sum(axis=0)
    core[-1] += w[n + r :].sum(axis=0)
    return core


def _blur_adjoint(img, kern):
    # exact adjoint of _blur: mirrored-kernel convolution plus folding the
    # replicate-padding contributions back onto the border rows/columns
    if kern.size == 1:
        return img * kern[0]
    out = _adjoint_axis0(img, kern)
    return _adjoint_axis0(out.T, kern).T


def _check_pair(u, f, graph):
    u = as_image(u)
    f = as_image(f)
    if u.shape != f.shape:
        raise ValueError(f"shape mismatch: u {u.shape} vs f {f.shape}")
    if (graph.height, graph.width) != u.shape:
        raise ValueError(
            f"weight graph built for {(graph.height, graph.width)}, image is {u.shape}"
        )
    return u, f


def nltv_energy(u, f, kern, graph: WeightGraph, alpha: float, eps: float = EPS_SMOOTH) -> float:
    u, f = _check_pair(u, f, graph)
    res = _blur(u, kern) - f
    r = kernels.nltv_sqrt_terms(u.ravel(), graph.indptr, graph.indices, graph.weights, eps)
    return float(np.sum(res * res) + alpha * np.sum(r))


def nltv_gradient(u, f, kern, graph: WeightGraph, alpha: float, eps: float = EPS_SMOOTH):
    u, f = _check_pair(u, f, graph)
    res = _blur(u, kern) - f
    grad = 2.0 * _blur_adjoint(res, kern)
    r = kernels.nltv_sqrt_terms(u.ravel(), graph.indptr, graph.indices, graph.weights, eps)
    reg = kernels.nltv_reg_grad(u.ravel(), graph.indptr, graph.indices, graph.weights, r)
    return grad + alpha * reg.reshape(u.shape)


def nltv_deconvolve(f, params: NLTVParams | None = None, diag=None) -> np.ndarray:
    """Deconvolve f by descending the NL-TV energy from u = f.

    Backtracking halves the step until the energy decreases and grows it
    by 1.2 after each accepted step; iteration stops once the relative
    energy decrease falls below 1e-6 (or at max_iters). The output is
    clamped to [0, 1] at the end only. When `diag` is a writable stream,
    CSV lines "iteration,energy,step" are emitted for accepted steps.
    """
    params = params or NLTVParams()
    f = as_image(f)
    kern = gaussian_kernel(params.kernel_sigma)
    graph = build_weights(f, params)
    u = f.copy()
    energy = nltv_energy(u, f, kern, graph, params.alpha)
    step = params.step0
    if diag is not None:
        diag.write("iteration,energy,step\n")
        diag.write(f"0,{energy!r},{step!r}\n")
    for it in range(1, params.max_iters + 1):
        grad = nltv_gradient(u, f, kern, graph, params.alpha)
        trial = None
        trial_energy = energy
        while step >= 1e-14:
            trial = u - step * grad
            trial_energy = nltv_energy(trial, f, kern, graph, params.alpha)
            if trial_energy < energy:
                break
            step *= 0.5
        if step < 1e-14 or trial is None:
            break
        u = trial
        previous, energy = energy, trial_energy
        step *= 1.2
        if diag is not None:
            diag.write(f"{it},{energy!r},{step!r}\n")
        if previous - energy < 1e-6 * previous:
            break
    return np.clip(u, 0.0, 1.0)


def save_weight_graph(path, graph: WeightGraph) -> None:
    """Binary sidecar: "NLTW", int32 width/height/k, then per pixel k
    (int32 neighbor index, float32 weight) records, padded with
    neighbor -1 / weight 0 where a pixel has fewer than k edges."""
    degrees = graph.degrees()
    kmax = int(degrees.max()) if degrees.size else 0
    n = graph.n_pixels
    idx = np.full((n, kmax), -1, dtype="<i4")
    wgt = np.zeros((n, kmax), dtype="<f4")
    fill = np.arange(kmax)[None, :] < degrees[:, None]
    idx[fill] = graph.indices
    wgt[fill] = graph.weights
    rec = np.empty((n, kmax), dtype=[("n", "<i4"), ("w", "<f4")])
    rec["n"] = idx
    rec["w"] = wgt
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<iii", graph.width, graph.height, kmax))
        fh.write(rec.tobytes())


def load_weight_graph(path) -> WeightGraph:
    data = Path(path).read_bytes()
    if data[:4] != GRAPH_MAGIC:
        raise ValueError(f"cannot read weight graph '{path}': bad magic {data[:4]!r}")
    width, height, kmax = struct.unpack_from("<iii", data, 4)
    n = width * height
    rec = np.frombuffer(data, dtype=[("n", "<i4"), ("w", "<f4")], count=n * kmax, offset=16)
    rec = rec.reshape(n, kmax)
    valid = rec["n"] >= 0
    lengths = valid.sum(axis=1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    return WeightGraph(
        height,
        width,
        indptr,
        rec["n"][valid].astype(np.int64),
        rec["w"][valid].astype(np.float64),
    )
