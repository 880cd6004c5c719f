"""Synthetic infrared scene generation with ground-truth masks.

Stands in for the real single-frame infrared benchmarks at desk scale:
smooth low-frequency backgrounds of several kinds, plus small additive
targets (point / gaussian-blob / extended) placed at controlled
signal-to-clutter ratio (SCR). SCR is defined as
(mean(target pixels) - mean(local background annulus)) / std(annulus).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .image_core import (
    BinaryMask,
    GrayImage,
    gaussian_blur,
    read_pbm,
    read_pgm,
    write_pbm,
    write_pgm,
)
from .rng import Rng, derive_seed

__all__ = [
    "BACKGROUND_KINDS",
    "TARGET_KINDS",
    "SceneSpec",
    "Sample",
    "synth_background",
    "inject_targets",
    "make_sample",
    "make_dataset",
    "measure_scr",
    "save_dataset",
    "load_dataset",
]

BACKGROUND_KINDS = ("sky-gradient", "cloud", "sea-clutter", "field", "city-blocks")
TARGET_KINDS = ("point", "gaussian-blob", "extended")


@dataclass(frozen=True)
class SceneSpec:
    size: int = 64
    background_kind: str = "cloud"
    n_targets: int = 2
    target_kind: str = "gaussian-blob"
    scr_range: tuple = (3.0, 8.0)
    seed: int = 0

    def __post_init__(self):
        if self.background_kind not in BACKGROUND_KINDS:
            raise ValueError(f"unknown background kind {self.background_kind!r}")
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.target_kind!r}")
        if not (0 < self.scr_range[0] <= self.scr_range[1]):
            raise ValueError(f"bad scr_range {self.scr_range}")
        if not (0 <= self.n_targets <= 8):
            raise ValueError("n_targets must be in [0, 8]")
        if self.size < 16:
            raise ValueError("scene size must be >= 16")

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "background_kind": self.background_kind,
            "n_targets": self.n_targets,
            "target_kind": self.target_kind,
            "scr_range": list(self.scr_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["scr_range"] = tuple(d["scr_range"])
        return cls(**d)


@dataclass(frozen=True)
class Sample:
    """Image + binary label mask + provenance metadata."""

    image: GrayImage
    mask: BinaryMask
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError("image and mask dimensions must match")

    def with_image(self, image: GrayImage, lineage_step: str | None = None) -> "Sample":
        meta = dict(self.meta)
        if lineage_step is not None:
            meta["lineage"] = list(meta.get("lineage", [])) + [lineage_step]
        return Sample(image=image, mask=self.mask, meta=meta)


def _value_noise(size: int, cell: int, rng: Rng) -> np.ndarray:
    """One octave of bilinear value noise with grid spacing `cell`."""
    n = max(2, size // cell + 2)
    grid = rng.uniform(0.0, 1.0, (n, n))
    from .image_core import _resize_array

    return _resize_array(grid, size, size)


def synth_background(spec: SceneSpec, rng: Rng) -> GrayImage:
    """Smooth low-frequency background field for the requested kind."""
    size = spec.size
    kind = spec.background_kind
    if kind == "sky-gradient":
        top, bottom = sorted(rng.uniform(0.1, 0.9, 2))
        base = np.linspace(top, bottom, size)[:, None] * np.ones((1, size))
        base = base + 0.05 * _value_noise(size, size // 4, rng)
    elif kind == "cloud":
        base = 0.6 * _value_noise(size, size // 2, rng)
        base += 0.3 * _value_noise(size, size // 4, rng)
        base += 0.1 * _value_noise(size, size // 8, rng)
        base += 0.2
    elif kind == "sea-clutter":
        # horizontal streaks: anisotropic noise, strongly blurred along rows
        rows = _value_noise(size, size // 8, rng)
        streaks = GrayImage(rows)
        streaks = gaussian_blur(streaks, 1.0).data
        base = 0.25 + 0.35 * streaks + 0.15 * _value_noise(size, size // 2, rng)
        base = np.repeat(base[::2, :], 2, axis=0)[:size, :]
    elif kind == "field":
        base = 0.35 + 0.3 * _value_noise(size, size // 4, rng) + 0.15 * _value_noise(size, size // 8, rng)
    elif kind == "city-blocks":
        base = 0.3 + 0.2 * _value_noise(size, size // 2, rng)
        n_blocks = int(rng.integers(4, 9))
        for _ in range(n_blocks):
            bw = int(rng.integers(size // 8, size // 3))
            bh = int(rng.integers(size // 8, size // 3))
            r = int(rng.integers(0, size - bh))
            c = int(rng.integers(0, size - bw))
            base[r : r + bh, c : c + bw] += rng.uniform(0.1, 0.35)
    else:  # pragma: no cover
        raise ValueError(kind)
    img = gaussian_blur(GrayImage(np.clip(base, 0.0, 1.0)), max(1.0, size / 32.0))
    # normalize into a randomized sub-range with headroom for target injection
    a = img.data
    lo = float(rng.uniform(0.08, 0.35))
    span = float(rng.uniform(0.25, 0.45))
    rng_span = max(a.max() - a.min(), 1e-9)
    return GrayImage(lo + span * (a - a.min()) / rng_span)


def _blob_profile(kind: str, rng: Rng) -> np.ndarray:
    """Unit-peak target amplitude profile, truncated below 10% of peak."""
    if kind == "point":
        sigma = rng.uniform(0.6, 1.0)
        radius = 2
    elif kind == "gaussian-blob":
        sigma = rng.uniform(1.0, 1.8)
        radius = 4
    else:  # extended
        sigma = rng.uniform(2.5, 4.5)
        radius = 12
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    if kind == "extended":
        a = rng.uniform(0.6, 1.0)
        b = rng.uniform(0.6, 1.0)
        theta = rng.uniform(0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (ct * x + st * y) / (a * sigma)
        v = (-st * x + ct * y) / (b * sigma)
        g = np.exp(-0.5 * (u**2 + v**2))
    else:
        g = np.exp(-0.5 * (x**2 + y**2) / sigma**2)
    g[g <= 0.1] = 0.0  # truncate so mask support == additive support
    return g


def _annulus_indices(shape, rr, cc, support):
    """Ring of background pixels around a target support bounding box."""
    h, w = shape
    rows = [p[0] for p in support]
    cols = [p[1] for p in support]
    r0, r1 = min(rows), max(rows)
    c0, c1 = min(cols), max(cols)
    ring = 3
    rs = slice(max(0, r0 - ring), min(h, r1 + ring + 1))
    cs = slice(max(0, c0 - ring), min(w, c1 + ring + 1))
    sel = np.zeros(shape, dtype=bool)
    sel[rs, cs] = True
    for r, c in support:
        sel[r, c] = False
    return np.nonzero(sel)


def measure_scr(img: GrayImage, support: list[tuple]) -> float:
    """Recompute SCR of a target from the final image and its pixel support."""
    ann = _annulus_indices(img.shape, None, None, support)
    bg = img.data[ann]
    tgt = np.array([img.data[r, c] for r, c in support])
    std = bg.std()
    if std == 0:
        return float("inf")
    return float((tgt.mean() - bg.mean()) / std)


def inject_targets(bg: GrayImage, spec: SceneSpec, rng: Rng) -> Sample:
    """Place spec.n_targets additive targets with SCR inside spec.scr_range.

    Target centers are rejection-sampled so bounding boxes are disjoint;
    amplitude is solved from the measured local background statistics so
    the realized SCR hits a uniform draw from scr_range.
    """
    h, w = bg.shape
    img = bg.data.copy()
    mask = np.zeros((h, w), dtype=np.uint8)
    margin = 4
    profiles = [_blob_profile(spec.target_kind, rng) for _ in range(spec.n_targets)]
    for profile in profiles:
        pr = profile.shape[0] // 2
        if margin + pr >= h - margin - pr or margin + pr >= w - margin - pr:
            raise ValueError(f"image {w}x{h} too small for target with margin {margin}")
    # place all boxes before painting anything: a single greedy pass can
    # wedge itself (an early central box may leave no legal position for
    # the next one), so on exhaustion the whole layout is redrawn
    placed_boxes: list[tuple] = []
    for _round in range(50):
        placed_boxes = []
        for profile in profiles:
            pr = profile.shape[0] // 2
            lo, hi_r, hi_c = margin + pr, h - margin - pr, w - margin - pr
            for _attempt in range(200):
                cy = int(rng.integers(lo, hi_r))
                cx = int(rng.integers(lo, hi_c))
                box = (cy - pr, cy + pr, cx - pr, cx + pr)
                if all(box[1] < b[0] - 2 or box[0] > b[1] + 2
                       or box[3] < b[2] - 2 or box[2] > b[3] + 2
                       for b in placed_boxes):
                    placed_boxes.append(box)
                    break
            else:
                break
        if len(placed_boxes) == spec.n_targets:
            break
    else:
        raise RuntimeError("could not place non-overlapping targets")
    scrs = []
    for profile, box in zip(profiles, placed_boxes):
        pr = profile.shape[0] // 2
        cy, cx = box[0] + pr, box[2] + pr
        sup_local = np.nonzero(profile > 0)
        support = [(cy - pr + r, cx - pr + c) for r, c in zip(*sup_local)]
        ann = _annulus_indices((h, w), None, None, support)
        bg_ann = img[ann]
        mu_ann, sd_ann = bg_ann.mean(), bg_ann.std()
        sd_ann = max(sd_ann, 1e-4)
        mu_tgt_bg = np.mean([img[r, c] for r, c in support])
        scr_goal = rng.uniform(*spec.scr_range)
        mean_profile = profile[sup_local].mean()
        amp = (scr_goal * sd_ann - (mu_tgt_bg - mu_ann)) / mean_profile
        amp = max(amp, 1e-6)
        box_slice = (slice(cy - pr, cy + pr + 1), slice(cx - pr, cx + pr + 1))
        # refine amplitude against the clamped image so the realized SCR
        # (recomputed from final pixels) hits the goal
        for _ in range(8):
            trial = img.copy()
            trial[box_slice] += amp * profile
            np.clip(trial, 0.0, 1.0, out=trial)
            tgt = np.array([trial[r, c] for r, c in support])
            got = (tgt.mean() - bg_ann.mean()) / sd_ann
            if abs(got - scr_goal) <= 0.01 * scr_goal:
                break
            if got <= 0:
                amp *= 2.0
            else:
                amp *= scr_goal / got
        img[box_slice] += amp * profile
        np.clip(img, 0.0, 1.0, out=img)
        mask[box_slice] |= (profile > 0).astype(np.uint8)
        scrs.append(scr_goal)
    sample = Sample(
        image=GrayImage(img),
        mask=BinaryMask(mask),
        meta={"spec": spec.to_dict(), "scr_targets": scrs, "lineage": ["synth"]},
    )
    return sample


def make_sample(spec: SceneSpec) -> Sample:
    rng = Rng(spec.seed)
    bg = synth_background(spec, rng.spawn("background"))
    return inject_targets(bg, spec, rng.spawn("targets"))


def make_dataset(n: int, spec_template: SceneSpec, seed: int, train_frac: float = 0.7,
                 background_kinds: list | None = None):
    """Generate n samples with derived per-sample seeds plus a manifest.

    The train/test split is exact: indices are ordered by a deterministic
    per-index hash and the first floor(train_frac * n) become train.
    background_kinds, when given, is cycled across sample indices.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    samples = []
    specs = []
    for i in range(n):
        spec_i = replace(spec_template, seed=derive_seed(seed, "sample", i))
        if background_kinds:
            spec_i = replace(spec_i, background_kind=background_kinds[i % len(background_kinds)])
        specs.append(spec_i)
        samples.append(make_sample(spec_i))
    order = sorted(range(n), key=lambda i: derive_seed(seed, "split", i))
    n_train = int(np.floor(train_frac * n))
    split = ["test"] * n
    for i in order[:n_train]:
        split[i] = "train"
    manifest = {
        "n": n,
        "seed": seed,
        "train_frac": train_frac,
        "template": spec_template.to_dict(),
        "specs": [s.to_dict() for s in specs],
        "split": split,
    }
    for s, sp in zip(samples, split):
        s.meta["split"] = sp
    return samples, manifest


def save_dataset(samples: list[Sample], manifest: dict, out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        write_pgm(s.image, out / "images" / f"{i:04d}.pgm")
        write_pbm(s.mask, out / "masks" / f"{i:04d}.pbm")
    manifest = dict(manifest)
    manifest["meta"] = [s.meta for s in samples]
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_dataset(in_dir):
    src = Path(in_dir)
    with open(src / "manifest.json") as f:
        manifest = json.load(f)
    metas = manifest.get("meta")
    samples = []
    i = 0
    while (src / "images" / f"{i:04d}.pgm").exists():
        img = read_pgm(src / "images" / f"{i:04d}.pgm")
        mask = read_pbm(src / "masks" / f"{i:04d}.pbm")
        meta = metas[i] if metas else {}
        samples.append(Sample(image=img, mask=mask, meta=meta))
        i += 1
    return samples, manifest
