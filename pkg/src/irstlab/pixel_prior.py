"""Pixel-prior harmonization: a small fully convolutional enhancement net.

Architecture: shallow 3x3 conv (1 -> C), R residual blocks at width C,
elementwise fusion of shallow and deep features, 3x3 head conv (C -> 1),
plus a global residual from the input. The head is zero-initialized, so
the untrained network is exactly the identity.

Training pairs are built on the fly: draw a clean image, degrade it,
cut-and-paste a degraded rectangle back in, and regress the net's output
on the clean image (mean squared error).
"""

from __future__ import annotations

import numpy as np

from . import nn_core as nn
from .augment import DegradeConfig, PasteConfig, cut_and_paste, degrade, diffmosaic_stage1, sample_mask
from .image_core import GrayImage
from .rng import Rng
from .synth import Sample

__all__ = ["PixelPriorNet", "pp_forward", "pp_train", "harmonize"]


class PixelPriorNet(nn.Module):
    def __init__(self, rng: Rng, channels: int = 32, blocks: int = 4):
        self.channels = channels
        self.blocks = blocks
        self.shallow = nn.Conv2d(1, channels, 3, rng.spawn("shallow"), "shallow")
        self.deep = [
            nn.ResidualBlock(channels, rng.spawn("block", i), f"block{i}")
            for i in range(blocks)
        ]
        self.head = nn.Conv2d(channels, 1, 3, rng.spawn("head"), "head", zero_init=True)

    def __call__(self, x: nn.Tensor) -> nn.Tensor:
        s = self.shallow(x)
        d = s
        for block in self.deep:
            d = block(d)
        fused = nn.add(s, d)
        return nn.add(x, self.head(fused))

    def config(self) -> dict:
        return {"channels": self.channels, "blocks": self.blocks}


def pp_forward(net: PixelPriorNet, img: GrayImage) -> GrayImage:
    x = nn.Tensor(img.data[None, None])
    y = net(x)
    return GrayImage(np.clip(y.data[0, 0], 0.0, 1.0))


def pp_train(net: PixelPriorNet, dataset: list[Sample], degrade_cfg: DegradeConfig,
             paste_cfg: PasteConfig, epochs: int, lr: float, rng: Rng,
             batch_size: int = 4) -> list[dict]:
    """Minimize mse(net(mixed), clean) over on-the-fly degraded pairs.

    Returns a per-epoch log. The logged loss is measured on a fixed,
    seed-derived set of degraded pairs (one per sample) so values are
    comparable across epochs; training steps use fresh draws each step.
    """
    if not dataset:
        raise ValueError("pp_train needs a nonempty dataset")
    opt = nn.Adam(net.parameters(), lr)
    eval_pairs = []
    for i, s in enumerate(dataset):
        r = rng.spawn("eval", i)
        deg = degrade(s.image, degrade_cfg, r.spawn("degrade"))
        sel = sample_mask(s.image.width, s.image.height, paste_cfg, r.spawn("select"))
        mix = cut_and_paste(s.image, deg, sel, invert=paste_cfg.invert_convention)
        eval_pairs.append((mix.data, s.image.data))
    log = []
    step = 0
    for epoch in range(epochs):
        order = rng.spawn("order", epoch).permutation(len(dataset))
        losses = []
        for start in range(0, len(order), batch_size):
            idxs = order[start : start + batch_size]
            clean = []
            mixed = []
            for i in idxs:
                img = dataset[int(i)].image
                r = rng.spawn("aug", step, int(i))
                deg = degrade(img, degrade_cfg, r.spawn("degrade"))
                sel = sample_mask(img.width, img.height, paste_cfg, r.spawn("select"))
                mix = cut_and_paste(img, deg, sel, invert=paste_cfg.invert_convention)
                clean.append(img.data)
                mixed.append(mix.data)
            x = nn.Tensor(np.stack(mixed)[:, None])
            target = nn.Tensor(np.stack(clean)[:, None])
            loss = nn.mse(net(x), target)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        if not np.isfinite(float(np.mean(losses))):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        eval_losses = []
        for bstart in range(0, len(eval_pairs), batch_size):
            batch = eval_pairs[bstart : bstart + batch_size]
            x = nn.Tensor(np.stack([m for m, _ in batch])[:, None])
            t = nn.Tensor(np.stack([c for _, c in batch])[:, None])
            eval_losses.append(float(nn.mse(net(x), t).item()) * len(batch))
        log.append({"epoch": epoch, "loss": sum(eval_losses) / len(eval_pairs)})
    return log


def harmonize(net: PixelPriorNet, mosaic_sample: Sample, degrade_cfg: DegradeConfig,
              paste_cfg: PasteConfig, rng: Rng) -> Sample:
    """Degrade-and-mix the mosaic, then run the enhancement net.

    The mask passes through untouched; lineage gains the harmonize step.
    """
    img = mosaic_sample.image
    deg = degrade(img, degrade_cfg, rng.spawn("degrade"))
    sel = sample_mask(img.width, img.height, paste_cfg, rng.spawn("select"))
    mix = cut_and_paste(img, deg, sel, invert=paste_cfg.invert_convention)
    smooth = pp_forward(net, mix)
    meta = dict(mosaic_sample.meta)
    meta["lineage"] = list(meta.get("lineage", [])) + ["degrade", "cut_and_paste", "harmonize"]
    return Sample(image=smooth, mask=mosaic_sample.mask, meta=meta)
