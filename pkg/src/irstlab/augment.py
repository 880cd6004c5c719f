"""Mixing augmentations: mosaic, cutmix, mixup, degradation and cut-and-paste.

The degradation module is `orders` repetitions of blur -> resize down/up ->
additive noise with parameters drawn uniformly from the configured ranges.
Cut-and-paste composes an image with its degraded copy through a rectangular
selection mask: degraded content inside the mask, original outside. A config
flag `invert_convention` swaps the two (the alternative reading where the
original region is pasted onto the degraded image).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import (
    BinaryMask,
    GrayImage,
    add_gaussian_noise,
    gaussian_blur,
    resize_bilinear,
    _resize_array,
)
from .rng import Rng
from .synth import Sample

__all__ = [
    "DegradeConfig",
    "PasteConfig",
    "degrade",
    "sample_mask",
    "cut_and_paste",
    "mosaic",
    "cutmix",
    "mixup",
    "diffmosaic_stage1",
]


@dataclass(frozen=True)
class DegradeConfig:
    orders: int = 2
    blur_sigma_range: tuple = (0.2, 2.0)
    resize_scale_range: tuple = (0.5, 1.5)
    noise_sigma_range: tuple = (0.0, 0.05)

    def __post_init__(self):
        if self.orders < 1:
            raise ValueError("orders must be >= 1")
        for name in ("blur_sigma_range", "resize_scale_range", "noise_sigma_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} min must be <= max")

    def to_dict(self) -> dict:
        return {
            "orders": self.orders,
            "blur_sigma_range": list(self.blur_sigma_range),
            "resize_scale_range": list(self.resize_scale_range),
            "noise_sigma_range": list(self.noise_sigma_range),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            orders=d.get("orders", 2),
            blur_sigma_range=tuple(d.get("blur_sigma_range", (0.2, 2.0))),
            resize_scale_range=tuple(d.get("resize_scale_range", (0.5, 1.5))),
            noise_sigma_range=tuple(d.get("noise_sigma_range", (0.0, 0.05))),
        )


@dataclass(frozen=True)
class PasteConfig:
    region_frac_range: tuple = (0.2, 0.6)
    shape: str = "rectangle"
    invert_convention: bool = False

    def __post_init__(self):
        lo, hi = self.region_frac_range
        if not (0 < lo <= hi < 1):
            raise ValueError(f"region_frac_range must satisfy 0 < min <= max < 1, got {self.region_frac_range}")
        if self.shape != "rectangle":
            raise ValueError("only rectangle selection regions are supported")

    def to_dict(self) -> dict:
        return {
            "region_frac_range": list(self.region_frac_range),
            "shape": self.shape,
            "invert_convention": self.invert_convention,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            region_frac_range=tuple(d.get("region_frac_range", (0.2, 0.6))),
            shape=d.get("shape", "rectangle"),
            invert_convention=d.get("invert_convention", False),
        )


def degrade(img: GrayImage, cfg: DegradeConfig, rng: Rng) -> GrayImage:
    """blur -> resize round trip -> noise, repeated cfg.orders times."""
    h, w = img.shape
    out = img
    for _ in range(cfg.orders):
        sigma = float(rng.uniform(*cfg.blur_sigma_range))
        out = gaussian_blur(out, max(sigma, 1e-9))
        scale = float(rng.uniform(*cfg.resize_scale_range))
        sw = max(1, int(round(w * scale)))
        sh = max(1, int(round(h * scale)))
        if (sw, sh) != (w, h):
            out = resize_bilinear(out, sw, sh)
            out = resize_bilinear(out, w, h)
        nsigma = float(rng.uniform(*cfg.noise_sigma_range))
        out = add_gaussian_noise(out, nsigma, rng)
    return out


def sample_mask(w: int, h: int, cfg: PasteConfig, rng: Rng) -> BinaryMask:
    """Random axis-aligned rectangle covering an area fraction in range."""
    if w < 4 or h < 4:
        raise ValueError("mask sampling needs w, h >= 4")
    frac = float(rng.uniform(*cfg.region_frac_range))
    area = frac * w * h
    # draw an aspect ratio, then fit the rectangle inside the image
    for _ in range(100):
        aspect = float(rng.uniform(0.5, 2.0))
        rw = int(round(np.sqrt(area * aspect)))
        rh = int(round(area / max(rw, 1)))
        rw, rh = min(max(rw, 1), w), min(max(rh, 1), h)
        got = rw * rh / (w * h)
        if cfg.region_frac_range[0] - 1e-9 <= got <= cfg.region_frac_range[1] + 1e-9:
            break
    else:
        rw = int(round(np.sqrt(area)))
        rh = int(round(area / max(rw, 1)))
        rw, rh = min(max(rw, 1), w), min(max(rh, 1), h)
    r0 = int(rng.integers(0, h - rh + 1))
    c0 = int(rng.integers(0, w - rw + 1))
    bits = np.zeros((h, w), dtype=np.uint8)
    bits[r0 : r0 + rh, c0 : c0 + rw] = 1
    return BinaryMask(bits)


def cut_and_paste(orig: GrayImage, degraded: GrayImage, m: BinaryMask,
                  invert: bool = False) -> GrayImage:
    """Masked blend: (1 - m) * orig + m * degraded (swapped when invert)."""
    if orig.shape != degraded.shape or orig.shape != m.shape:
        raise ValueError("cut_and_paste inputs must share dimensions")
    sel = m.bits.astype(np.float64)
    if invert:
        sel = 1.0 - sel
    return GrayImage((1.0 - sel) * orig.data + sel * degraded.data)


def _resize_mask(mask: BinaryMask, new_w: int, new_h: int) -> BinaryMask:
    soft = _resize_array(mask.bits.astype(np.float64), new_w, new_h)
    return BinaryMask((soft > 0.5).astype(np.uint8))


def mosaic(samples: list[Sample], out_size: int, rng: Rng) -> Sample:
    """Compose four samples into the quadrants of one out_size image.

    The split point is drawn uniformly from the central half; each input
    (image and mask) is resized to its quadrant, the mask re-binarized at
    0.5 after bilinear resampling.
    """
    if len(samples) != 4:
        raise ValueError(f"mosaic needs exactly 4 samples, got {len(samples)}")
    cx = int(rng.integers(int(0.25 * out_size), int(0.75 * out_size) + 1))
    cy = int(rng.integers(int(0.25 * out_size), int(0.75 * out_size) + 1))
    quads = [
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, out_size)),
        (slice(cy, out_size), slice(0, cx)),
        (slice(cy, out_size), slice(cx, out_size)),
    ]
    img = np.zeros((out_size, out_size))
    bits = np.zeros((out_size, out_size), dtype=np.uint8)
    for s, (rs, cs) in zip(samples, quads):
        qh, qw = rs.stop - rs.start, cs.stop - cs.start
        if qh < 1 or qw < 1:
            raise ValueError("degenerate mosaic quadrant")
        img[rs, cs] = resize_bilinear(s.image, qw, qh).data
        bits[rs, cs] = _resize_mask(s.mask, qw, qh).bits
    meta = {
        "lineage": ["mosaic"],
        "mosaic_split": [cy, cx],
        "sources": [s.meta.get("spec") for s in samples],
    }
    return Sample(image=GrayImage(img), mask=BinaryMask(bits), meta=meta)


def cutmix(a: Sample, b: Sample, rng: Rng,
           frac_range: tuple = (0.2, 0.6)) -> Sample:
    """Paste a random rectangle of b into a; masks composited identically."""
    if a.image.shape != b.image.shape:
        raise ValueError("cutmix samples must share dimensions")
    rect = sample_mask(a.image.width, a.image.height, PasteConfig(region_frac_range=frac_range), rng)
    img = cut_and_paste(a.image, b.image, rect)
    sel = rect.bits
    bits = np.where(sel == 1, b.mask.bits, a.mask.bits)
    meta = {"lineage": ["cutmix"]}
    return Sample(image=img, mask=BinaryMask(bits), meta=meta)


def mixup(a: Sample, b: Sample, lam: float) -> Sample:
    """Convex pixel blend lam*a + (1-lam)*b; mask is the binary union."""
    if a.image.shape != b.image.shape:
        raise ValueError("mixup samples must share dimensions")
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must be in [0, 1]")
    img = GrayImage(lam * a.image.data + (1.0 - lam) * b.image.data)
    bits = np.maximum(a.mask.bits, b.mask.bits)
    return Sample(image=img, mask=BinaryMask(bits), meta={"lineage": ["mixup"]})


def diffmosaic_stage1(samples: list[Sample], degrade_cfg: DegradeConfig,
                      paste_cfg: PasteConfig, out_size: int, rng: Rng) -> Sample:
    """mosaic -> degrade -> cut_and_paste; the mask passes through unchanged."""
    mos = mosaic(samples, out_size, rng.spawn("mosaic"))
    deg = degrade(mos.image, degrade_cfg, rng.spawn("degrade"))
    sel = sample_mask(out_size, out_size, paste_cfg, rng.spawn("select"))
    mixed = cut_and_paste(mos.image, deg, sel, invert=paste_cfg.invert_convention)
    meta = dict(mos.meta)
    meta["lineage"] = list(mos.meta["lineage"]) + ["degrade", "cut_and_paste"]
    return Sample(image=mixed, mask=mos.mask, meta=meta)
