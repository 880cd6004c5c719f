"""Minimal reverse-mode autodiff over dense float64 tensors."""

from .tensor import (
    Tensor,
    Parameter,
    add,
    sub,
    mul,
    div,
    neg,
    power,
    matmul,
    linear,
    relu,
    sigmoid,
    exp,
    log,
    conv2d,
    avgpool2d,
    maxpool2d,
    upsample_nearest,
    concat_channels,
    tsum,
    tmean,
    mse,
    reshape,
    clip_01,
)
from .layers import (
    Module,
    Conv2d,
    Linear,
    ChannelAttention,
    SpatialAttention,
    ResidualBlock,
)
from .optim import SGD, Adam
from .checkpoint import save_checkpoint, load_checkpoint, load_into
from .gradcheck import finite_difference_check

__all__ = [
    "Tensor", "Parameter",
    "add", "sub", "mul", "div", "neg", "power", "matmul", "linear",
    "relu", "sigmoid", "exp", "log", "conv2d", "avgpool2d", "maxpool2d",
    "upsample_nearest", "concat_channels", "tsum", "tmean", "mse",
    "reshape", "clip_01",
    "Module", "Conv2d", "Linear", "ChannelAttention", "SpatialAttention",
    "ResidualBlock",
    "SGD", "Adam",
    "save_checkpoint", "load_checkpoint", "load_into",
    "finite_difference_check",
]
