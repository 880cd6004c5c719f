"""Traditional small-target detectors: white top-hat, multi-scale local
contrast measure, and patch-image robust PCA decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image_core import BinaryMask, GrayImage

__all__ = [
    "PatchImageConfig",
    "disk_element",
    "tophat",
    "lcm",
    "soft_threshold",
    "rpca_ialm",
    "ipi_detect",
    "patch_unfold",
    "patch_fold",
    "threshold_to_mask",
]


def disk_element(radius: int) -> np.ndarray:
    """Binary disk structuring element of the given radius."""
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return (x**2 + y**2 <= radius**2).astype(bool)


def tophat(img: GrayImage, se_radius: int = 5) -> np.ndarray:
    """White top-hat: image minus its grayscale opening (disk element)."""
    if se_radius < 1:
        raise ValueError("se_radius must be >= 1")
    se = disk_element(se_radius)
    opened = ndimage.grey_dilation(
        ndimage.grey_erosion(img.data, footprint=se, mode="reflect"),
        footprint=se, mode="reflect",
    )
    return np.maximum(img.data - opened, 0.0)


def _cell_reduce(padded: np.ndarray, c: int, dy: int, dx: int, op: str, h: int, w: int) -> np.ndarray:
    """Mean or max of the c x c cell offset by (dy, dx) cells from center."""
    win = np.lib.stride_tricks.sliding_window_view(padded, (c, c))
    r0 = (dy + 1) * c
    c0 = (dx + 1) * c
    block = win[r0 : r0 + h, c0 : c0 + w]
    if op == "max":
        return block.max(axis=(2, 3))
    return block.mean(axis=(2, 3))


def lcm(img: GrayImage, scales=(3, 5, 7)) -> np.ndarray:
    """Multi-scale local contrast: (max of center cell)^2 over the max of
    the eight neighbor cell means, maximized over scales. The cell grid is
    3x3 with cell size equal to the scale; reflective padding."""
    for c in scales:
        if c % 2 == 0:
            raise ValueError("cell sizes must be odd")
    h, w = img.shape
    score = np.zeros((h, w))
    for c in scales:
        pad = c + c // 2
        padded = np.pad(img.data, pad, mode="symmetric")
        center_max = _cell_reduce(padded, c, 0, 0, "max", h, w)
        neighbor = np.full((h, w), -np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                neighbor = np.maximum(neighbor, _cell_reduce(padded, c, dy, dx, "mean", h, w))
        this = center_max**2 / np.maximum(neighbor, 1e-12)
        score = np.maximum(score, this)
    return score


def soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise shrinkage sign(x) * max(|x| - tau, 0)."""
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def _svt(x: np.ndarray, tau: float) -> tuple[np.ndarray, int]:
    """Singular value thresholding; returns the thresholded matrix and rank."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > tau
    r = int(keep.sum())
    if r == 0:
        return np.zeros_like(x), 0
    return (u[:, :r] * (s[:r] - tau)) @ vt[:r], r


@dataclass(frozen=True)
class PatchImageConfig:
    patch: int = 16
    stride: int = 8
    lam: float | None = None  # defaults to 1/sqrt(max(m, n)) of the patch matrix
    tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self):
        if self.stride > self.patch:
            raise ValueError("stride must be <= patch")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lambda must be positive")


def rpca_ialm(D: np.ndarray, lam: float | None = None, tol: float = 1e-6,
              max_iter: int = 500, track_objective: bool = False):
    """Robust PCA min ||B||_* + lam * ||T||_1 s.t. D = B + T, solved by the
    inexact augmented Lagrangian method with singular value thresholding.

    Returns (B, T, info) where info carries iterations, convergence flag
    and (optionally) the per-iteration objective values.
    """
    D = np.asarray(D, dtype=np.float64)
    if not np.all(np.isfinite(D)):
        raise ValueError("rpca_ialm input must be finite")
    m, n = D.shape
    if lam is None:
        lam = 1.0 / np.sqrt(max(m, n))
    norm_d = np.linalg.norm(D, "fro")
    if norm_d == 0:
        info = {"iterations": 0, "converged": True, "objective": [0.0] if track_objective else None}
        return np.zeros_like(D), np.zeros_like(D), info
    # standard IALM initialization (Lin, Chen & Ma 2010)
    norm_two = np.linalg.norm(D, 2)
    norm_inf = np.abs(D).max() / lam
    dual_norm = max(norm_two, norm_inf)
    Y = D / dual_norm
    mu = 1.25 / norm_two
    rho = 1.5
    B = np.zeros_like(D)
    T = np.zeros_like(D)
    objective = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        T = soft_threshold(D - B + Y / mu, lam / mu)
        B, _ = _svt(D - T + Y / mu, 1.0 / mu)
        R = D - B - T
        Y = Y + mu * R
        mu = min(mu * rho, mu * 1e7)
        if track_objective:
            # evaluate at the feasible pair (B, D - B): with T eliminated
            # through the constraint the value decreases monotonically,
            # whereas the raw iterate objective starts near zero and grows
            objective.append(float(np.linalg.norm(B, "nuc") + lam * np.abs(D - B).sum()))
        if np.linalg.norm(R, "fro") / norm_d <= tol:
            converged = True
            break
    info = {"iterations": it, "converged": converged,
            "objective": objective if track_objective else None}
    return B, T, info


def _patch_grid(n: int, patch: int, stride: int) -> list[int]:
    starts = list(range(0, n - patch + 1, stride))
    if starts[-1] != n - patch:
        starts.append(n - patch)
    return starts


def patch_unfold(a: np.ndarray, patch: int, stride: int) -> tuple[np.ndarray, list]:
    """Sliding patches vectorized into columns of a matrix."""
    h, w = a.shape
    if h < patch or w < patch:
        raise ValueError(f"image {w}x{h} smaller than patch {patch}")
    coords = [(r, c) for r in _patch_grid(h, patch, stride) for c in _patch_grid(w, patch, stride)]
    cols = np.stack([a[r : r + patch, c : c + patch].reshape(-1) for r, c in coords], axis=1)
    return cols, coords


def patch_fold(cols: np.ndarray, coords: list, shape: tuple, patch: int) -> np.ndarray:
    """Overlap-averaging inverse of patch_unfold (partition of unity)."""
    acc = np.zeros(shape)
    weight = np.zeros(shape)
    for k, (r, c) in enumerate(coords):
        acc[r : r + patch, c : c + patch] += cols[:, k].reshape(patch, patch)
        weight[r : r + patch, c : c + patch] += 1.0
    return acc / weight


def ipi_detect(img: GrayImage, cfg: PatchImageConfig = PatchImageConfig()) -> np.ndarray:
    """Infrared patch-image detection: RPCA on the patch matrix; the score
    map is |sparse part| folded back with overlap averaging."""
    cols, coords = patch_unfold(img.data, cfg.patch, cfg.stride)
    _, T, _ = rpca_ialm(cols, lam=cfg.lam, tol=cfg.tol, max_iter=cfg.max_iter)
    return np.abs(patch_fold(T, coords, img.shape, cfg.patch))


def threshold_to_mask(score: np.ndarray, method: str = "adaptive",
                      tau: float = 0.5, k: float = 5.0) -> BinaryMask:
    """Binarize a score map: fixed threshold tau, or adaptive mu + k*sigma."""
    if not np.all(np.isfinite(score)):
        raise ValueError("score map must be finite")
    if method == "fixed":
        thr = tau
    elif method == "adaptive":
        thr = score.mean() + k * score.std()
    else:
        raise ValueError(f"unknown threshold method {method!r}")
    return BinaryMask((score > thr).astype(np.uint8))
