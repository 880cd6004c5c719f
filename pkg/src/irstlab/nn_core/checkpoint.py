"""Checkpoint I/O: JSON header + flat binary of named float64 arrays.

Layout: 8-byte big-endian header length, UTF-8 JSON header, then the
arrays concatenated in header order as little-endian float64.
"""

from __future__ import annotations

import json

import numpy as np

from .tensor import Parameter

__all__ = ["save_checkpoint", "load_checkpoint", "load_into"]

_MAGIC = b"IRSTCKPT"


def save_checkpoint(path, params: list[Parameter], optimizer_state: dict | None = None,
                    extra: dict | None = None) -> None:
    arrays = {p.name: p.data for p in params}
    opt_meta = None
    if optimizer_state is not None:
        opt_meta = {k: v for k, v in optimizer_state.items() if k != "arrays"}
        for name, arr in optimizer_state.get("arrays", {}).items():
            arrays[f"opt/{name}"] = arr
    header = {
        "arrays": [{"name": n, "shape": list(np.shape(a))} for n, a in arrays.items()],
        "optimizer": opt_meta,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(len(hbytes).to_bytes(8, "big"))
        f.write(hbytes)
        for a in arrays.values():
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (arrays: dict name->ndarray, optimizer_state: dict|None, extra)."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        hlen = int.from_bytes(f.read(8), "big")
        header = json.loads(f.read(hlen).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(n * 8)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    opt_state = header.get("optimizer")
    if opt_state is not None:
        opt_state = dict(opt_state)
        opt_state["arrays"] = {
            name[len("opt/"):]: arr for name, arr in arrays.items() if name.startswith("opt/")
        }
    weights = {n: a for n, a in arrays.items() if not n.startswith("opt/")}
    return weights, opt_state, header.get("extra", {})


def load_into(params: list[Parameter], weights: dict) -> None:
    for p in params:
        if p.name not in weights:
            raise KeyError(f"checkpoint missing parameter {p.name}")
        arr = weights[p.name]
        if arr.shape != p.data.shape:
            raise ValueError(f"shape mismatch for {p.name}: {arr.shape} vs {p.data.shape}")
        p.data = arr.copy()
