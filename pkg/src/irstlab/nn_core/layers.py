"""Layer modules: convolutions, attention gates, residual blocks.

A Module owns named Parameters; `parameters()` returns them in a fixed
order so optimizer state and checkpoints are deterministic.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from .tensor import (
    Parameter,
    Tensor,
    add,
    concat_channels,
    conv2d,
    linear,
    mul,
    relu,
    reshape,
    sigmoid,
    tmean,
)

__all__ = [
    "Module",
    "Conv2d",
    "Linear",
    "ChannelAttention",
    "SpatialAttention",
    "ResidualBlock",
]


class Module:
    def parameters(self) -> list[Parameter]:
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Parameter):
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
        names = [p.name for p in out]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in model")
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.data)) for p in self.parameters())


def _he_init(rng: Rng, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int, rng: Rng, name: str,
                 stride: int = 1, pad: int | None = None, zero_init: bool = False):
        self.stride = stride
        self.pad = pad
        if zero_init:
            w = np.zeros((out_ch, in_ch, k, k))
        else:
            w = _he_init(rng, (out_ch, in_ch, k, k), in_ch * k * k)
        self.w = Parameter(w, f"{name}.w")
        self.b = Parameter(np.zeros(out_ch), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class Linear(Module):
    def __init__(self, in_f: int, out_f: int, rng: Rng, name: str, bias_init: float = 0.0):
        self.w = Parameter(_he_init(rng, (in_f, out_f), in_f), f"{name}.w")
        self.b = Parameter(np.full(out_f, bias_init, dtype=np.float64), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


class ChannelAttention(Module):
    """Global average pool -> bottleneck MLP (reduction 4) -> sigmoid gate."""

    def __init__(self, channels: int, rng: Rng, name: str, reduction: int = 4):
        if channels < reduction:
            raise ValueError(f"channels ({channels}) must be >= reduction ({reduction})")
        hidden = channels // reduction
        self.fc1 = Linear(channels, hidden, rng, f"{name}.fc1")
        self.fc2 = Linear(hidden, channels, rng, f"{name}.fc2")

    def __call__(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        pooled = tmean(x, axis=(2, 3))  # [N, C]
        gate = sigmoid(self.fc2(relu(self.fc1(pooled))))
        gate = reshape(gate, (n, c, 1, 1))
        return mul(x, gate)

    def gated(self, x: Tensor, bias_shift: float) -> Tensor:
        """Gate with an additive pre-sigmoid bias (saturation testing hook)."""
        n, c = x.shape[0], x.shape[1]
        pooled = tmean(x, axis=(2, 3))
        gate = sigmoid(self.fc2(relu(self.fc1(pooled))) + Tensor(bias_shift))
        return mul(x, reshape(gate, (n, c, 1, 1)))


class SpatialAttention(Module):
    """Channel-mean and channel-max maps -> 7x7 conv -> sigmoid gate."""

    def __init__(self, rng: Rng, name: str, k: int = 7):
        self.conv = Conv2d(2, 1, k, rng, f"{name}.conv")

    def __call__(self, x: Tensor) -> Tensor:
        return self._apply(x, 0.0)

    def gated(self, x: Tensor, bias_shift: float) -> Tensor:
        return self._apply(x, bias_shift)

    def _apply(self, x: Tensor, bias_shift: float) -> Tensor:
        mean_map = tmean(x, axis=1, keepdims=True)
        max_map = _channel_max(x)
        stacked = concat_channels([mean_map, max_map])
        pre = self.conv(stacked)
        if bias_shift:
            pre = pre + Tensor(bias_shift)
        gate = sigmoid(pre)
        return mul(x, gate)


def _channel_max(x: Tensor) -> Tensor:
    from .tensor import _node

    idx = x.data.argmax(axis=1, keepdims=True)
    out_data = np.take_along_axis(x.data, idx, axis=1)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis=1)
        x._accum(gx)
    return _node(out_data, (x,), bw)


class ResidualBlock(Module):
    """conv-relu-conv plus identity skip, constant width."""

    def __init__(self, channels: int, rng: Rng, name: str, k: int = 3):
        self.c1 = Conv2d(channels, channels, k, rng, f"{name}.c1")
        self.c2 = Conv2d(channels, channels, k, rng, f"{name}.c2")

    def __call__(self, x: Tensor) -> Tensor:
        return add(x, self.c2(relu(self.c1(x))))
