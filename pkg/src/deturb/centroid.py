"""Centroid-of-deformations restoration.

The centroid image of a sequence is built by averaging the optical
flows from the reference frame toward every other frame (the reference
itself contributing a zero flow) and warping the reference by that
mean. An iterative correction then re-estimates the mean flow from the
current centroid toward all frames and warps again until the correction
norm stabilizes. Finally every frame is registered onto the centroid
and the registered stack is averaged.

Flow direction bookkeeping: "the flow from A toward B" is the field g
with warp(A, g) ~= B, i.e. ``horn_schunck(B, A)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flow import HSParams, horn_schunck
from .grid import as_flow, as_image, as_sequence, flow_rms, temporal_mean, warp, zero_flow


@dataclass
class CentroidParams:
    hs: HSParams = field(default_factory=HSParams)
    max_corrections: int = 10
    correction_tol: float = 0.05
    reference_index: int = 0

    def __post_init__(self):
        if self.max_corrections < 1:
            raise ValueError(f"max_corrections must be >= 1, got {self.max_corrections}")
        if self.correction_tol <= 0:
            raise ValueError(f"correction_tol must be > 0, got {self.correction_tol}")
        if self.reference_index < 0:
            raise ValueError(f"reference_index must be >= 0, got {self.reference_index}")


@dataclass
class CentroidResult:
    centroid: np.ndarray
    registered_mean: np.ndarray
    correction_norms: list[float]
    registered_frames: list[np.ndarray]


def average_flow(flows) -> np.ndarray:
    """Componentwise arithmetic mean of a list of flow fields."""
    flows = [as_flow(f) for f in flows]
    if not flows:
        raise ValueError("average_flow needs at least one flow field")
    shape = flows[0].shape
    for i, f in enumerate(flows):
        if f.shape != shape:
            raise ValueError(f"flow {i} has shape {f.shape}, expected {shape}")
    return np.mean(np.stack(flows, axis=0), axis=0)


def _check_reference(params: CentroidParams, n: int) -> int:
    if params.reference_index >= n:
        raise ValueError(f"reference_index {params.reference_index} out of range for {n} frames")
    return params.reference_index


def initial_centroid(frames, params: CentroidParams | None = None) -> np.ndarray:
    """First centroid estimate: reference frame warped by the mean deformation.

    The mean runs over the N-1 flows from the reference toward the other
    frames plus an implicit zero flow for the reference itself, i.e. it
    divides by N.
    """
    params = params or CentroidParams()
    seq = as_sequence(frames)
    ref_idx = _check_reference(params, len(seq))
    ref = seq[ref_idx]
    flows = [zero_flow(*ref.shape)]
    for i, frame in enumerate(seq):
        if i == ref_idx:
            continue
        flows.append(horn_schunck(frame, ref, params.hs))
    return warp(ref, average_flow(flows))


def correction_step(q, frames, params: CentroidParams | None = None):
    """One correction: warp q by the mean flow from q toward every frame.

    Returns (new estimate, RMS norm of the mean correction flow). All N
    frames contribute a solved flow here; there is no implicit zero.
    """
    params = params or CentroidParams()
    q = as_image(q)
    seq = as_sequence(frames)
    if seq[0].shape != q.shape:
        raise ValueError(f"estimate shape {q.shape} does not match frames {seq[0].shape}")
    flows = [horn_schunck(frame, q, params.hs) for frame in seq]
    mean = average_flow(flows)
    return warp(q, mean), flow_rms(mean)


def iterate_centroid(frames, params: CentroidParams | None = None, dump_dir=None):
    """Refine the centroid until the correction norm stabilizes.

    Stops when the relative change of the correction norm between
    successive steps drops below correction_tol (or at max_corrections).
    Returns (centroid, norm trace with one entry per correction).
    """
    params = params or CentroidParams()
    q = initial_centroid(frames, params)
    _dump(dump_dir, 0, q)
    norms: list[float] = []
    for k in range(params.max_corrections):
        q, norm = correction_step(q, frames, params)
        norms.append(norm)
        _dump(dump_dir, k + 1, q)
        if norm <= 1e-14:
            break
        if len(norms) >= 2 and abs(norms[-1] - norms[-2]) / norms[-2] < params.correction_tol:
            break
    return q, norms


def register_and_average(frames, centroid, params: CentroidParams | None = None, dump_dir=None):
    """Pull every frame onto the centroid, then average the registered stack.

    Each frame is evaluated at x + phi_i(x) where phi_i is the flow
    solved with the centroid as first frame, so warp(I_i, phi_i) ~= C.
    Returns (registered frames, registered mean).
    """
    params = params or CentroidParams()
    c = as_image(centroid)
    seq = as_sequence(frames)
    if seq[0].shape != c.shape:
        raise ValueError(f"centroid shape {c.shape} does not match frames {seq[0].shape}")
    registered = []
    for i, frame in enumerate(seq):
        phi = horn_schunck(c, frame, params.hs)
        registered.append(warp(frame, phi))
        _dump(dump_dir, i, registered[-1], prefix="registered")
    return registered, temporal_mean(registered)


def restore_sequence(frames, params: CentroidParams | None = None, dump_dir=None) -> CentroidResult:
    """Full geometric restoration: iterated centroid, then register-and-average."""
    params = params or CentroidParams()
    centroid, norms = iterate_centroid(frames, params, dump_dir=dump_dir)
    registered, reg_mean = register_and_average(frames, centroid, params)
    return CentroidResult(centroid, reg_mean, norms, registered)


def _dump(dump_dir, index: int, img, prefix: str = "stage") -> None:
    if dump_dir is None:
        return
    from .io import write_png

    path = Path(dump_dir)
    path.mkdir(parents=True, exist_ok=True)
    write_png(path / f"{prefix}_{index}.png", np.clip(img, 0.0, 1.0))
