"""SGD and Adam parameter updates."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter

__all__ = ["SGD", "Adam"]


class SGD:
    def __init__(self, params: list[Parameter], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ValueError(f"parameter {p.name} has no gradient")
            p.data = p.data - self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> dict:
        return {"kind": "sgd", "lr": self.lr, "arrays": {}}

    def load_state_dict(self, state: dict):
        self.lr = state["lr"]


class Adam:
    def __init__(self, params: list[Parameter], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            if p.grad is None:
                raise ValueError(f"parameter {p.name} has no gradient")
            m = self.m[p.name] = b1 * self.m[p.name] + (1 - b1) * p.grad
            v = self.v[p.name] = b2 * self.v[p.name] + (1 - b2) * p.grad**2
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> dict:
        arrays = {}
        for name in self.m:
            arrays[f"m/{name}"] = self.m[name]
            arrays[f"v/{name}"] = self.v[name]
        return {
            "kind": "adam", "lr": self.lr, "beta1": self.beta1,
            "beta2": self.beta2, "eps": self.eps, "t": self.t, "arrays": arrays,
        }

    def load_state_dict(self, state: dict):
        self.lr = state["lr"]
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self.t = state["t"]
        for key, arr in state["arrays"].items():
            kind, name = key.split("/", 1)
            target = self.m if kind == "m" else self.v
            target[name] = np.array(arr)
