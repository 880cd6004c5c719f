"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["finite_difference_check"]


def finite_difference_check(fn, inputs: list[Tensor], h: float = 1e-5,
                            rtol: float = 1e-4) -> float:
    """Compare analytic gradients of scalar fn(*inputs) against central
    finite differences. Returns the worst relative error; raises if it
    exceeds rtol."""
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    out = fn(*inputs)
    out.backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(*inputs).data)
            flat[i] = orig - h
            fm = float(fn(*inputs).data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
        err = np.abs(analytic - numeric).max() / scale
        worst = max(worst, err)
    if worst > rtol:
        raise AssertionError(f"gradient check failed: relative error {worst:.3e} > {rtol}")
    return worst
