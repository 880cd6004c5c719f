"""Grayscale image value types and deterministic pixel-level primitives.

GrayImage holds float64 intensities in [0, 1]; BinaryMask holds {0, 1}.
Both are immutable after construction (the backing arrays are frozen), so
they are safe to share across threads. All operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .rng import Rng

__all__ = [
    "GrayImage",
    "BinaryMask",
    "Component",
    "gaussian_blur",
    "resize_bilinear",
    "add_gaussian_noise",
    "connected_components",
    "quadrant_stats",
    "QuadrantStats",
    "read_pgm",
    "write_pgm",
    "read_pbm",
    "write_pbm",
    "read_png",
]


class GrayImage:
    """2-D grayscale raster, float64 in [0, 1], row-major."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"GrayImage needs a 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        arr = np.clip(arr, 0.0, 1.0)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GrayImage is immutable")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


class BinaryMask:
    """2-D binary mask, values exactly 0 or 1."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BinaryMask needs a 2-D array, got shape {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        else:
            arr = arr.astype(np.uint8)
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("BinaryMask values must be 0 or 1")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


@dataclass(frozen=True)
class Component:
    """One 8-connected component of a mask."""

    pixels: tuple  # tuple of (row, col)
    area: int
    centroid: tuple  # (row, col) float means

    @classmethod
    def from_pixels(cls, pixels: Sequence[tuple]) -> "Component":
        px = tuple(sorted((int(r), int(c)) for r, c in pixels))
        rows = np.array([p[0] for p in px], dtype=np.float64)
        cols = np.array([p[1] for p in px], dtype=np.float64)
        return cls(pixels=px, area=len(px), centroid=(float(rows.mean()), float(cols.mean())))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with symmetric (reflective) borders.

    Kernel radius is ceil(3*sigma); the sampled kernel is normalized to
    sum 1, so a constant image is preserved exactly. Symmetric half-sample
    reflection makes the effective pixel-weight matrix doubly stochastic,
    so the global mean is preserved to machine precision.
    """
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    k = _gaussian_kernel(sigma)
    r = (len(k) - 1) // 2
    a = img.data
    # pad widths may exceed the image size; pad in stages if so
    out = _conv1d_sym(a, k, r, axis=0)
    out = _conv1d_sym(out, k, r, axis=1)
    return GrayImage(out)


def _conv1d_sym(a: np.ndarray, k: np.ndarray, r: int, axis: int) -> np.ndarray:
    n = a.shape[axis]
    if r == 0:
        return a * k[0]
    # np.pad symmetric mode supports pad > n; correlate over windows
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    ap = np.pad(a, pad, mode="symmetric") if r < n else _pad_sym_big(a, r, axis)
    win = np.lib.stride_tricks.sliding_window_view(ap, len(k), axis=axis)
    return np.tensordot(win, k, axes=([2], [0]))


def _pad_sym_big(a: np.ndarray, r: int, axis: int) -> np.ndarray:
    # symmetric padding wider than the array: apply repeatedly
    while r > 0:
        step = min(r, a.shape[axis] - 0)
        step = min(step, a.shape[axis])
        pad = [(0, 0), (0, 0)]
        pad[axis] = (step, step)
        a = np.pad(a, pad, mode="symmetric")
        r -= step
    return a


def resize_bilinear(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Corner-aligned bilinear resampling to new_w x new_h."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be >= 1, got {new_w}x{new_h}")
    out = _resize_array(img.data, new_w, new_h)
    return GrayImage(out)


def _resize_array(a: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    h, w = a.shape
    if (new_h, new_w) == (h, w):
        return a.copy()
    ys = np.linspace(0.0, h - 1.0, new_h) if new_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, new_w) if new_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def add_gaussian_noise(img: GrayImage, sigma: float, rng: Rng) -> GrayImage:
    """Additive iid N(0, sigma^2) noise, clamped to [0, 1]."""
    if sigma < 0 or not np.isfinite(sigma):
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    noise = rng.normal(0.0, sigma, img.data.shape)
    return GrayImage(img.data + noise)


_EIGHT = np.ones((3, 3), dtype=int)


def connected_components(mask: BinaryMask) -> list[Component]:
    """8-connected components with pixel sets, areas and centroids."""
    labels, n = ndimage.label(mask.bits, structure=_EIGHT)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)
    lab = labels[rows, cols]
    order = np.argsort(lab, kind="stable")
    rows, cols, lab = rows[order], cols[order], lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    comps = []
    for idx in range(n):
        lo, hi = bounds[idx], bounds[idx + 1]
        comps.append(Component.from_pixels(
            list(zip(rows[lo:hi].tolist(), cols[lo:hi].tolist()))))
    return comps


@dataclass(frozen=True)
class QuadrantStats:
    """Per-quadrant (mean, std) in order TL, TR, BL, BR."""

    means: tuple
    stds: tuple
    quadrant_discrepancy: float


def quadrant_stats(img: GrayImage) -> QuadrantStats:
    """Mean/std of the four equal quadrants; discrepancy = max pairwise mean gap."""
    h, w = img.shape
    if h % 2 or w % 2:
        raise ValueError(f"quadrant_stats needs even dimensions, got {w}x{h}")
    a = img.data
    quads = [a[: h // 2, : w // 2], a[: h // 2, w // 2 :], a[h // 2 :, : w // 2], a[h // 2 :, w // 2 :]]
    means = tuple(float(q.mean()) for q in quads)
    stds = tuple(float(q.std()) for q in quads)
    disc = float(max(means) - min(means))
    return QuadrantStats(means=means, stds=stds, quadrant_discrepancy=disc)


# ---------------------------------------------------------------------------
# File I/O: 16-bit big-endian PGM (P5) for images, PBM (P4) for masks.

def write_pgm(img: GrayImage, path) -> None:
    q = np.round(img.data * 65535.0).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.width} {img.height}\n65535\n".encode("ascii"))
        f.write(q.tobytes())


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as f:
        raw = f.read()
    magic, rest = _pnm_header(raw, b"P5", 3)
    w, h, maxval = magic
    n = w * h
    if maxval == 65535:
        data = np.frombuffer(rest[: n * 2], dtype=">u2").astype(np.float64) / 65535.0
    elif maxval < 256:
        data = np.frombuffer(rest[:n], dtype=np.uint8).astype(np.float64) / maxval
    else:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    return GrayImage(data.reshape(h, w))


def write_pbm(mask: BinaryMask, path) -> None:
    bits = np.packbits(mask.bits, axis=1)
    with open(path, "wb") as f:
        f.write(f"P4\n{mask.width} {mask.height}\n".encode("ascii"))
        f.write(bits.tobytes())


def read_pbm(path) -> BinaryMask:
    with open(path, "rb") as f:
        raw = f.read()
    fields, rest = _pnm_header(raw, b"P4", 2)
    w, h = fields
    row_bytes = (w + 7) // 8
    packed = np.frombuffer(rest[: row_bytes * h], dtype=np.uint8).reshape(h, row_bytes)
    bits = np.unpackbits(packed, axis=1)[:, :w]
    return BinaryMask(bits)


def _pnm_header(raw: bytes, magic: bytes, n_fields: int):
    if not raw.startswith(magic):
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    pos = len(magic)
    while len(fields) < n_fields:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after header
    return fields, raw[pos:]


def read_png(path) -> GrayImage:
    """Optional PNG import (requires Pillow); converted to grayscale [0,1]."""
    try:
        from PIL import Image
    except ImportError as e:  # pragma: no cover
        raise RuntimeError("PNG import requires Pillow (pip install irstlab[png])") from e
    with Image.open(path) as im:
        arr = np.asarray(im.convert("I;16" if im.mode == "I;16" else "L"), dtype=np.float64)
    scale = 65535.0 if arr.max() > 255 else 255.0
    return GrayImage(arr / scale)
