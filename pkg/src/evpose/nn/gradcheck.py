"""Central-difference gradient verification for float64 graphs."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, tensors, eps: float = 1e-5, max_coords: int = 24,
               seed: int = 0) -> float:
    """Compare analytic grads of scalar fn() against finite differences.

    fn must be deterministic and close over `tensors` (each float64 with
    requires_grad). Per tensor up to max_coords coordinates are probed.
    Returns the worst relative error |a - n| / max(|a|, |n|, 1e-3); callers
    assert it under their tolerance.
    """
    tensors = list(tensors)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise TypeError("grad_check requires float64 tensors")
        t.grad = None
    out = fn()
    if out.size != 1:
        raise ValueError("grad_check needs a scalar objective")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, ga in zip(tensors, analytic):
        n = t.data.size
        flat = t.data.reshape(-1)
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_hi = float(fn().data)
            flat[i] = orig - eps
            f_lo = float(fn().data)
            flat[i] = orig
            numeric = (f_hi - f_lo) / (2.0 * eps)
            a = float(ga.reshape(-1)[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            worst = max(worst, rel)
    return worst
