"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: each op records its parents and a backward closure; calling
`backward()` on a scalar runs the closures in reverse topological order.
Reductions are plain numpy sums in fixed order, so gradients are
bit-deterministic.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "add", "sub", "mul", "div", "neg", "power",
    "matmul", "linear", "relu", "sigmoid", "exp", "log",
    "conv2d", "avgpool2d", "maxpool2d", "upsample_nearest",
    "concat_channels", "tsum", "tmean", "mse", "reshape", "clip_01",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        # topological order over the recorded graph
        order: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    nd = g.ndim - len(shape)
    if nd > 0:
        g = g.sum(axis=tuple(range(nd)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))
    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(-g, b.data.shape))
    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.data.shape))
        b._accum(_unbroadcast(g * a.data, b.data.shape))
    return _node(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accum(_unbroadcast(g / b.data, a.data.shape))
        b._accum(_unbroadcast(-g * a.data / (b.data**2), b.data.shape))
    return _node(a.data / b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        a._accum(-g)
    return _node(-a.data, (a,), bw)


def power(a: Tensor, p: float) -> Tensor:
    def bw(g):
        a._accum(g * p * a.data ** (p - 1))
    return _node(a.data**p, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bw(g):
        a._accum(g * out_data)
    return _node(out_data, (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(g):
        a._accum(g / a.data)
    return _node(np.log(a.data), (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)
    return _node(a.data @ b.data, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[N,D] @ w[D,F] + b[F]."""
    def bw(g):
        x._accum(g @ w.data.T)
        w._accum(x.data.T @ g)
        b._accum(g.sum(axis=0))
    return _node(x.data @ w.data + b.data, (x, w, b), bw)


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def bw(g):
        a._accum(g * pos)
    return _node(np.where(pos, a.data, 0.0), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        a._accum(g * out_data * (1.0 - out_data))
    return _node(out_data, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bw(g):
        a._accum(g.reshape(old))
    return _node(a.data.reshape(shape), (a,), bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full(a.data.shape, g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg, a.data.shape))
    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(n))


def mse(a: Tensor, b: Tensor) -> Tensor:
    """mean((a - b)^2)."""
    d = sub(a, b)
    return tmean(mul(d, d))


def clip_01(a: Tensor) -> Tensor:
    """Clamp to [0, 1]; gradient passes only inside the interval."""
    inside = (a.data > 0.0) & (a.data < 1.0)

    def bw(g):
        a._accum(g * inside)
    return _node(np.clip(a.data, 0.0, 1.0), (a,), bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int | None = None) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with w[F,C,k,k] plus bias b[F]."""
    N, C, H, W = x.data.shape
    F, C2, k, k2 = w.data.shape
    if C != C2 or k != k2:
        raise ValueError(f"conv2d shape mismatch: x C={C}, w {w.data.shape}")
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    if b.data.shape != (F,):
        raise ValueError("bias must have shape (F,)")
    if pad is None:
        pad = (k - 1) // 2
    s = stride
    Ho = (H + 2 * pad - k) // s + 1
    Wo = (W + 2 * pad - k) // s + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    if s == 1:
        # shift-and-add: one small matmul per kernel offset, no im2col copy
        out_data = np.empty((N, F, Ho, Wo))
        out_data[:] = b.data[None, :, None, None]
        for i in range(k):
            for j in range(k):
                view = xp[:, :, i : i + Ho, j : j + Wo]
                out_data += np.einsum("fc,nchw->nfhw", w.data[:, :, i, j], view, optimize=True)

        def bw(g):
            b._accum(g.sum(axis=(0, 2, 3)))
            dw = np.empty_like(w.data)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    view = xp[:, :, i : i + Ho, j : j + Wo]
                    dw[:, :, i, j] = np.einsum("nfhw,nchw->fc", g, view, optimize=True)
                    dxp[:, :, i : i + Ho, j : j + Wo] += np.einsum(
                        "cf,nfhw->nchw", w.data[:, :, i, j].T, g, optimize=True)
            w._accum(dw)
            x._accum(dxp[:, :, pad:-pad, pad:-pad] if pad else dxp)
        return _node(out_data, (x, w, b), bw)

    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    # [N,C,Ho,Wo,k,k] -> cols [N*Ho*Wo, C*k*k]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * k * k)
    wmat = w.data.reshape(F, C * k * k)
    out_data = (cols @ wmat.T + b.data).reshape(N, Ho, Wo, F).transpose(0, 3, 1, 2)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, F)
        b._accum(gmat.sum(axis=0))
        w._accum((gmat.T @ cols).reshape(F, C, k, k))
        dcols = (gmat @ wmat).reshape(N, Ho, Wo, C, k, k).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * Ho : s, j : j + s * Wo : s] += dcols[:, :, :, :, i, j]
        if pad:
            x._accum(dxp[:, :, pad:-pad, pad:-pad])
        else:
            x._accum(dxp)
    return _node(out_data, (x, w, b), bw)


def avgpool2d(x: Tensor, k: int = 2) -> Tensor:
    N, C, H, W = x.data.shape
    if H % k or W % k:
        raise ValueError(f"avgpool2d needs dimensions divisible by {k}")
    blocks = x.data.reshape(N, C, H // k, k, W // k, k)
    out_data = blocks.mean(axis=(3, 5))

    def bw(g):
        x._accum(np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k))
    return _node(out_data, (x,), bw)


def maxpool2d(x: Tensor, k: int = 2) -> Tensor:
    N, C, H, W = x.data.shape
    if H % k or W % k:
        raise ValueError(f"maxpool2d needs dimensions divisible by {k}")
    blocks = x.data.reshape(N, C, H // k, k, W // k, k).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(N, C, H // k, W // k, k * k)
    idx = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(N, C, H // k, W // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H, W)
        x._accum(gx)
    return _node(out_data, (x,), bw)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    N, C, H, W = x.data.shape
    out_data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def bw(g):
        gx = g.reshape(N, C, H, factor, W, factor).sum(axis=(3, 5))
        x._accum(gx)
    return _node(out_data, (x,), bw)


def concat_channels(tensors: list[Tensor]) -> Tensor:
    sizes = [t.data.shape[1] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)

    def bw(g):
        off = 0
        for t, c in zip(tensors, sizes):
            t._accum(g[:, off : off + c])
            off += c
    return _node(out_data, tuple(tensors), bw)
