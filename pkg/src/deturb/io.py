"""File ingestion and output.

Supported inputs: 8/16-bit grayscale PNG, binary PGM (P5), and color
PNG converted to luma (0.299 R + 0.587 G + 0.114 B). Intensities are
normalized to [0, 1] on read regardless of source bit depth. All images
are written as 8-bit grayscale PNG (or P5 PGM), rescaled from [0, 1].

Flow fields use a little-endian binary format: 4 bytes ASCII "PIEH",
int32 width, int32 height, then width*height interleaved float32 (u, v)
pairs in row-major order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .grid import as_flow, as_image

FLOW_MAGIC = b"PIEH"

_LUMA = np.array([0.299, 0.587, 0.114])


def read_image(path) -> np.ndarray:
    """Read a PNG or PGM file as a float64 image in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    try:
        with PILImage.open(path) as im:
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode in ("RGBA", "LA"):
                im = im.convert("RGB" if mode == "RGBA" else "L")
                mode = im.mode
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"cannot read image '{path}': {exc}") from exc
    if arr.ndim == 3:
        if arr.shape[2] < 3:
            raise ValueError(f"cannot read image '{path}': unsupported band count {arr.shape[2]}")
        arr = arr[..., :3].astype(np.float64) @ _LUMA
        arr = arr / 255.0
    elif arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype in (np.uint16, np.int32):
        arr = arr.astype(np.float64) / 65535.0
    else:
        raise ValueError(f"cannot read image '{path}': unsupported pixel type {arr.dtype}")
    try:
        return as_image(arr)
    except ValueError as exc:
        raise ValueError(f"invalid image '{path}': {exc}") from exc


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"cannot read image '{path}': not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before the raster.
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise ValueError(f"cannot read image '{path}': malformed PGM header")
        fields.append(int(token))
    pos += 1  # single whitespace separating header and raster
    width, height, maxval = fields
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"cannot read image '{path}': bad maxval {maxval}")
    count = width * height
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=count, offset=pos)
    if raw.size != count:
        raise ValueError(f"cannot read image '{path}': truncated raster")
    arr = raw.reshape(height, width).astype(np.float64) / maxval
    try:
        return as_image(arr)
    except ValueError as exc:
        raise ValueError(f"invalid image '{path}': {exc}") from exc


def write_png(path, img) -> None:
    """Write img as 8-bit grayscale PNG, rescaling [0, 1] -> [0, 255]."""
    img = as_image(img)
    arr8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr8, mode="L").save(Path(path), format="PNG")


def write_pgm(path, img) -> None:
    """Write img as binary PGM (P5), maxval 255."""
    img = as_image(img)
    arr8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    hh, ww = arr8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{ww} {hh}\n255\n".encode("ascii"))
        fh.write(arr8.tobytes())


def write_flow(path, flow) -> None:
    flow = as_flow(flow)
    hh, ww = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(np.array([ww, hh], dtype="<i4").tobytes())
        fh.write(flow.astype("<f4").tobytes())


def read_flow(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != FLOW_MAGIC:
        raise ValueError(f"cannot read flow '{path}': bad magic {data[:4]!r}")
    ww, hh = np.frombuffer(data, dtype="<i4", count=2, offset=4)
    raw = np.frombuffer(data, dtype="<f4", count=int(ww) * int(hh) * 2, offset=12)
    if raw.size != ww * hh * 2:
        raise ValueError(f"cannot read flow '{path}': truncated payload")
    return raw.reshape(int(hh), int(ww), 2).astype(np.float64)


def read_sequence(directory, exts=(".png", ".pgm")) -> list[np.ndarray]:
    """Read all frames from a directory, in lexicographic filename order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"input directory '{directory}' does not exist")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in exts)
    if len(paths) < 2:
        raise ValueError(f"input directory '{directory}' holds {len(paths)} frames, need >= 2")
    frames = []
    shape = None
    for p in paths:
        img = read_image(p)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(
                f"frame '{p.name}' has size {img.shape[1]}x{img.shape[0]}, "
                f"expected {shape[1]}x{shape[0]} from '{paths[0].name}'"
            )
        frames.append(img)
    return frames
