"""Diffusion-prior resampling in a closed-form linear latent space.

The encoder/decoder pair is PCA (mean + top-k orthonormal principal
directions, via thin SVD), exactly invertible on its range. The diffusion
process is a standard DDPM over the k-dimensional latents: closed-form
forward noising q(z_t | z_0), an epsilon-prediction network trained by
noise matching, and ancestral reverse sampling. An analytic Gaussian
denoiser (exact conditional-mean epsilon for a diagonal Gaussian latent
law) serves as the verification oracle for the sampler.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .image_core import GrayImage
from .rng import Rng
from .synth import Sample

__all__ = [
    "LinearAE", "ae_fit", "encode", "decode",
    "NoiseSchedule",
    "MlpDenoiser", "AnalyticDenoiser",
    "forward_diffuse", "denoiser_train", "analytic_eps", "reverse_sample",
    "resample_image",
    "save_ae", "load_ae",
]


# ---------------------------------------------------------------------------
# Linear autoencoder (PCA)

@dataclass(frozen=True)
class LinearAE:
    mean: np.ndarray       # d-vector
    basis: np.ndarray      # k x d, orthonormal rows
    image_shape: tuple     # (H, W) with H*W == d

    @property
    def k(self) -> int:
        return self.basis.shape[0]


def ae_fit(images: list[GrayImage], k: int = 64) -> LinearAE:
    """Mean-centering plus top-k principal directions via thin SVD."""
    if len(images) < k:
        raise ValueError(f"need at least k={k} images, got {len(images)}")
    shape = images[0].shape
    X = np.stack([im.data.reshape(-1) for im in images])
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=False)
    return LinearAE(mean=mean, basis=vt[:k].copy(), image_shape=shape)


def encode(ae: LinearAE, img: GrayImage) -> np.ndarray:
    if img.shape != ae.image_shape:
        raise ValueError(f"image shape {img.shape} != autoencoder shape {ae.image_shape}")
    return ae.basis @ (img.data.reshape(-1) - ae.mean)


def decode(ae: LinearAE, z: np.ndarray) -> GrayImage:
    flat = ae.mean + ae.basis.T @ np.asarray(z, dtype=np.float64)
    return GrayImage(np.clip(flat.reshape(ae.image_shape), 0.0, 1.0))


def save_ae(ae: LinearAE, path) -> None:
    path = Path(path)
    header = {"k": ae.k, "d": int(ae.mean.size), "image_shape": list(ae.image_shape)}
    with open(path, "wb") as f:
        h = json.dumps(header, sort_keys=True).encode()
        f.write(len(h).to_bytes(8, "big"))
        f.write(h)
        f.write(np.ascontiguousarray(ae.mean, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ae.basis, dtype="<f8").tobytes())


def load_ae(path) -> LinearAE:
    with open(path, "rb") as f:
        hlen = int.from_bytes(f.read(8), "big")
        header = json.loads(f.read(hlen).decode())
        d, k = header["d"], header["k"]
        mean = np.frombuffer(f.read(d * 8), dtype="<f8").copy()
        basis = np.frombuffer(f.read(k * d * 8), dtype="<f8").reshape(k, d).copy()
    return LinearAE(mean=mean, basis=basis, image_shape=tuple(header["image_shape"]))


# ---------------------------------------------------------------------------
# Noise schedule

class NoiseSchedule:
    """Linear beta schedule, endpoints 1e-4 -> 0.02 at 1000 steps, rescaled
    by 1000/T so the terminal signal level is step-count independent."""

    def __init__(self, T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02,
                 reference_steps: int = 1000):
        if T < 1:
            raise ValueError("T must be >= 1")
        scale = reference_steps / T
        self.T = T
        self.betas = np.linspace(beta_start, beta_end, T) * scale
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ValueError("betas must lie strictly in (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)

    def alpha_bar(self, t: int) -> float:
        """alpha-bar at step t in 1..T; t=0 is the identity convention."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def forward_diffuse(z0: np.ndarray, t: int, sched: NoiseSchedule, rng: Rng) -> np.ndarray:
    """Single-shot sample of q(z_t | z_0) = N(sqrt(ab_t) z0, (1 - ab_t) I)."""
    if not (0 <= t <= sched.T):
        raise ValueError(f"t must be in [0, {sched.T}], got {t}")
    ab = sched.alpha_bar(t)
    if t == 0:
        return np.array(z0, dtype=np.float64)
    eps = rng.standard_normal(np.shape(z0))
    return np.sqrt(ab) * np.asarray(z0) + np.sqrt(1.0 - ab) * eps


# ---------------------------------------------------------------------------
# Denoisers

def _time_embedding(t: np.ndarray, T: int, dim: int = 16) -> np.ndarray:
    """Sinusoidal embedding of t/T, shape [len(t), dim]."""
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), half))
    ang = (np.asarray(t, dtype=np.float64)[:, None] / T) * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class MlpDenoiser(nn.Module):
    """Two-hidden-layer MLP epsilon-predictor on (z_t, time embedding)."""

    def __init__(self, k: int, rng: Rng, hidden: int = 256, t_dim: int = 16):
        self.k = k
        self.t_dim = t_dim
        self.fc1 = nn.Linear(k + t_dim, hidden, rng.spawn("fc1"), "den.fc1")
        self.fc2 = nn.Linear(hidden, hidden, rng.spawn("fc2"), "den.fc2")
        self.fc3 = nn.Linear(hidden, k, rng.spawn("fc3"), "den.fc3")

    def eps_tensor(self, z_t: np.ndarray, t: np.ndarray, sched: NoiseSchedule) -> nn.Tensor:
        emb = _time_embedding(np.atleast_1d(t), sched.T, self.t_dim)
        x = nn.Tensor(np.concatenate([np.atleast_2d(z_t), emb], axis=1))
        return self.fc3(nn.relu(self.fc2(nn.relu(self.fc1(x)))))

    def eps(self, z_t: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
        z = np.atleast_2d(z_t)
        ts = np.full(z.shape[0], t) if np.ndim(t) == 0 else np.asarray(t)
        out = self.eps_tensor(z, ts, sched).data
        return out[0] if np.ndim(z_t) == 1 else out

    def config(self) -> dict:
        return {"k": self.k, "hidden": self.fc2.w.data.shape[0], "t_dim": self.t_dim}


class AnalyticDenoiser:
    """Exact MMSE epsilon-prediction for z0 ~ N(mu, diag(sigma2)).

    With z_t = sqrt(ab) z0 + sqrt(1-ab) eps, the posterior over z0 is
    Gaussian, and E[eps | z_t] = (z_t - sqrt(ab) E[z0 | z_t]) / sqrt(1-ab).
    Not trainable; exists as the sampler-verification oracle.
    """

    def __init__(self, mu: np.ndarray, sigma2: np.ndarray):
        mu = np.asarray(mu, dtype=np.float64)
        sigma2 = np.asarray(sigma2, dtype=np.float64) * np.ones_like(mu)
        if np.any(sigma2 < 0):
            raise ValueError("sigma2 must be non-negative")
        self.mu = mu
        self.sigma2 = sigma2

    def eps(self, z_t: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
        return analytic_eps(self.mu, self.sigma2, z_t, t, sched)


def analytic_eps(mu: np.ndarray, sigma2: np.ndarray, z_t: np.ndarray, t: int,
                 sched: NoiseSchedule) -> np.ndarray:
    """Closed-form conditional-mean epsilon for a diagonal Gaussian prior."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(sigma2 < 0):
        raise ValueError("sigma2 must be non-negative")
    ab = sched.alpha_bar(t)
    denom = ab * sigma2 + (1.0 - ab)
    z0_hat = mu + (np.sqrt(ab) * sigma2 / denom) * (np.asarray(z_t) - np.sqrt(ab) * mu)
    return (np.asarray(z_t) - np.sqrt(ab) * z0_hat) / np.sqrt(1.0 - ab)


# ---------------------------------------------------------------------------
# Training and sampling

def denoiser_train(den, latents: np.ndarray, sched: NoiseSchedule, steps: int,
                   lr: float, rng: Rng, batch_size: int = 32) -> list[dict]:
    """Standard epsilon-matching: sample t uniform in 1..T, eps ~ N(0, I),
    minimize mse(eps, den(sqrt(ab_t) z0 + sqrt(1-ab_t) eps, t))."""
    if not isinstance(den, MlpDenoiser):
        raise TypeError("only the MLP denoiser is trainable")
    Z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    opt = nn.Adam(den.parameters(), lr)
    log = []
    for step in range(steps):
        r = rng.spawn("step", step)
        idx = r.integers(0, Z.shape[0], batch_size)
        z0 = Z[idx]
        t = r.integers(1, sched.T + 1, batch_size)
        eps = r.standard_normal(z0.shape)
        ab = np.array([sched.alpha_bar(int(ti)) for ti in t])[:, None]
        z_t = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
        pred = den.eps_tensor(z_t, t, sched)
        loss = nn.mse(pred, nn.Tensor(eps))
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = loss.item()
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite denoiser loss at step {step}")
        log.append({"step": step, "loss": val})
    return log


def reverse_sample(den, sched: NoiseSchedule, z_T: np.ndarray, rng: Rng,
                   t_start: int | None = None) -> np.ndarray:
    """Ancestral DDPM reverse chain from t_start down to 0.

    z_{t-1} = (z_t - (1-a_t)/sqrt(1-ab_t) * eps_hat) / sqrt(a_t)
              + sqrt(beta_tilde_t) * n, with n = 0 at t = 1.
    Accepts a single latent [k] or a batch [n, k] of independent chains.
    """
    if t_start is None:
        t_start = sched.T
    if t_start > sched.T:
        raise ValueError("t_start must be <= T")
    z = np.array(z_T, dtype=np.float64)
    for t in range(t_start, 0, -1):
        a_t = sched.alphas[t - 1]
        ab_t = sched.alpha_bar(t)
        ab_prev = sched.alpha_bar(t - 1)
        eps_hat = den.eps(z, t, sched)
        mean = (z - (1.0 - a_t) / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(a_t)
        if t > 1:
            beta_tilde = sched.betas[t - 1] * (1.0 - ab_prev) / (1.0 - ab_t)
            z = mean + np.sqrt(beta_tilde) * rng.standard_normal(z.shape)
        else:
            z = mean
    return z


def resample_image(ae: LinearAE, den, sched: NoiseSchedule, sample: Sample,
                   strength: float, rng: Rng) -> Sample:
    """Partial noising and reverse sampling of one image's latent.

    t = ceil(strength * T); strength 1.0 is the full forward/reverse chain.
    The mask is untouched; meta records the latent fidelity value
    ||z0 - z0'||^2 and the step count.
    """
    if not (0 < strength <= 1.0):
        raise ValueError("strength must be in (0, 1]")
    t = int(np.ceil(strength * sched.T))
    if t < 1:
        raise ValueError("strength * T must be >= 1")
    z0 = encode(ae, sample.image)
    z_t = forward_diffuse(z0, t, sched, rng.spawn("forward"))
    z0p = reverse_sample(den, sched, z_t, rng.spawn("reverse"), t_start=t)
    img = decode(ae, z0p)
    meta = dict(sample.meta)
    meta["lineage"] = list(meta.get("lineage", [])) + ["resample"]
    meta["l_realis"] = float(np.sum((z0 - z0p) ** 2))
    meta["resample_t"] = t
    return Sample(image=img, mask=sample.mask, meta=meta)
