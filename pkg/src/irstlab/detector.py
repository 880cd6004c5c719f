"""Dense-nested attention detection network and the soft-IoU loss.

The backbone is a 3-scale, depth-2 nested grid of residual attention
blocks (conv-relu-conv + channel attention + spatial attention + skip),
with 2x average-pool downsampling, nearest-neighbor upsampling, and dense
skip concatenation. All top-row features feed a 1x1 fusion conv followed
by a sigmoid, so the output is an H x W probability map.
"""

from __future__ import annotations

import numpy as np

from . import nn_core as nn
from .image_core import BinaryMask, GrayImage
from .rng import Rng
from .synth import Sample

__all__ = [
    "IouLossConfig",
    "soft_iou_loss",
    "ResidualAttentionBlock",
    "DetectorNet",
    "det_forward",
    "det_train",
    "det_predict",
]


class IouLossConfig:
    def __init__(self, alpha: float = 1.0, per_image: bool = False):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha
        self.per_image = per_image


def soft_iou_loss(pred: nn.Tensor, gt: np.ndarray, cfg: IouLossConfig = IouLossConfig()) -> nn.Tensor:
    """1 - (sum(pred*gt) + alpha) / (sum(pred) + sum(gt) - sum(pred*gt) + alpha).

    Global-sum form by default; per_image averages the per-sample losses
    (pred shaped [N, 1, H, W]) instead.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    gt_t = nn.Tensor(gt)
    alpha = cfg.alpha
    if cfg.per_image and pred.data.ndim == 4:
        axes = (1, 2, 3)
        inter = nn.tsum(nn.mul(pred, gt_t), axis=axes)
        tot = nn.add(nn.tsum(pred, axis=axes), nn.tsum(gt_t, axis=axes))
        iou = nn.div(inter + alpha, nn.sub(tot, inter) + alpha)
        return nn.tmean(1.0 - iou)
    inter = nn.tsum(nn.mul(pred, gt_t))
    tot = nn.add(nn.tsum(pred), nn.tsum(gt_t))
    return 1.0 - nn.div(inter + alpha, nn.sub(tot, inter) + alpha)


class ResidualAttentionBlock(nn.Module):
    """conv-relu-conv, channel and spatial attention gates, plus skip."""

    def __init__(self, in_ch: int, out_ch: int, rng: Rng, name: str):
        self.c1 = nn.Conv2d(in_ch, out_ch, 3, rng.spawn("c1"), f"{name}.c1")
        self.c2 = nn.Conv2d(out_ch, out_ch, 3, rng.spawn("c2"), f"{name}.c2")
        self.ca = nn.ChannelAttention(out_ch, rng.spawn("ca"), f"{name}.ca")
        self.sa = nn.SpatialAttention(rng.spawn("sa"), f"{name}.sa")
        if in_ch != out_ch:
            self.skip = nn.Conv2d(in_ch, out_ch, 1, rng.spawn("skip"), f"{name}.skip")
        else:
            self.skip = None

    def __call__(self, x: nn.Tensor) -> nn.Tensor:
        y = self.c2(nn.relu(self.c1(x)))
        y = self.sa(self.ca(y))
        base = self.skip(x) if self.skip is not None else x
        return nn.add(base, y)


class DetectorNet(nn.Module):
    """UNet++-style nested grid: scales 0..2, nesting depth 2.

    Nodes: x00, x10, x20 on the downsampling path; x01 from (x00, up x10);
    x11 from (x10, up x20); x02 from (x00, x01, up x11). Fusion head:
    concat(x00, x01, x02) -> 1x1 conv -> sigmoid.
    """

    def __init__(self, rng: Rng, channels: int = 16):
        c = channels
        self.channels = c
        self.stem = nn.Conv2d(1, c, 3, rng.spawn("stem"), "stem")
        self.b00 = ResidualAttentionBlock(c, c, rng.spawn("b00"), "b00")
        self.b10 = ResidualAttentionBlock(c, 2 * c, rng.spawn("b10"), "b10")
        self.b20 = ResidualAttentionBlock(2 * c, 4 * c, rng.spawn("b20"), "b20")
        self.b01 = ResidualAttentionBlock(c + 2 * c, c, rng.spawn("b01"), "b01")
        self.b11 = ResidualAttentionBlock(2 * c + 4 * c, 2 * c, rng.spawn("b11"), "b11")
        self.b02 = ResidualAttentionBlock(c + c + 2 * c, c, rng.spawn("b02"), "b02")
        self.fuse = nn.Conv2d(3 * c, 1, 1, rng.spawn("fuse"), "fuse", pad=0)
        # start near the foreground prior so the sigmoid is not saturated
        self.fuse.b.data = np.full(1, -2.0)

    def __call__(self, x: nn.Tensor) -> nn.Tensor:
        x00 = self.b00(self.stem(x))
        x10 = self.b10(nn.avgpool2d(x00))
        x20 = self.b20(nn.avgpool2d(x10))
        x01 = self.b01(nn.concat_channels([x00, nn.upsample_nearest(x10)]))
        x11 = self.b11(nn.concat_channels([x10, nn.upsample_nearest(x20)]))
        x02 = self.b02(nn.concat_channels([x00, x01, nn.upsample_nearest(x11)]))
        return nn.sigmoid(self.fuse(nn.concat_channels([x00, x01, x02])))

    def config(self) -> dict:
        return {"channels": self.channels}


def det_forward(net: DetectorNet, img: GrayImage) -> np.ndarray:
    """Probability map in (0, 1) with the input's shape."""
    out = net(nn.Tensor(img.data[None, None]))
    return out.data[0, 0]


def det_train(net: DetectorNet, dataset: list[Sample], epochs: int, lr: float,
              rng: Rng, batch_size: int = 4,
              loss_cfg: IouLossConfig = IouLossConfig()) -> list[dict]:
    """Minimize the soft-IoU loss with Adam; per-epoch mean loss log."""
    if not dataset:
        raise ValueError("det_train needs a nonempty dataset")
    opt = nn.Adam(net.parameters(), lr)
    log = []
    for epoch in range(epochs):
        order = rng.spawn("order", epoch).permutation(len(dataset))
        losses = []
        for start in range(0, len(order), batch_size):
            idxs = order[start : start + batch_size]
            imgs = np.stack([dataset[int(i)].image.data for i in idxs])[:, None]
            masks = np.stack([dataset[int(i)].mask.bits for i in idxs])[:, None].astype(np.float64)
            pred = net(nn.Tensor(imgs))
            loss = soft_iou_loss(pred, masks, loss_cfg)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        log.append({"epoch": epoch, "loss": mean_loss})
    return log


def det_predict(net: DetectorNet, img: GrayImage, threshold: float = 0.5) -> BinaryMask:
    prob = det_forward(net, img)
    return BinaryMask((prob > threshold).astype(np.uint8))
