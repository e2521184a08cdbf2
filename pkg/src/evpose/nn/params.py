"""Named parameter/buffer registry with an Adam optimizer attached."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor


class ParameterStore:
    """Flat name -> array registry behind every model in this package.

    Parameters are trainable Tensors; buffers are plain arrays that persist
    in checkpoints but never receive gradients (batchnorm statistics, band
    masks). Names are slash-separated paths, unique per store.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._step = 0

    # -- registration ------------------------------------------------------

    def param(self, name: str, init: np.ndarray) -> Tensor:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(init, dtype=self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def buffer(self, name: str, init: np.ndarray) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate buffer name: {name}")
        arr = np.asarray(init)
        self._buffers[name] = arr
        return arr

    def parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    @property
    def count(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    # -- optimizer -----------------------------------------------------------

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> None:
        """One bias-corrected Adam update on every parameter with a grad."""
        self._step += 1
        t = self._step
        for name, p in self._params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            if name not in self._m:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            m, v = self._m[name], self._v[name]
            m += (1.0 - beta1) * (g - m)
            v += (1.0 - beta2) * (g * g - v)
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

    # -- (de)serialization ------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All persistent state as {name: array} (optimizer moments excluded)."""
        out = {f"p/{k}": t.data for k, t in self._params.items()}
        out.update({f"b/{k}": v for k, v in self._buffers.items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Restore parameters and buffers; every name must match in shape."""
        for key, value in arrays.items():
            kind, _, name = key.partition("/")
            if kind == "p" and name in self._params:
                target = self._params[name].data
            elif kind == "b" and name in self._buffers:
                target = self._buffers[name]
            else:
                raise ShapeMismatchError(f"unknown entry in checkpoint: {key}")
            if tuple(target.shape) != tuple(value.shape):
                raise ShapeMismatchError(
                    f"parameter '{name}' has shape {tuple(target.shape)} "
                    f"but the checkpoint holds {tuple(value.shape)}")
            target[...] = value
        missing = ({f"p/{k}" for k in self._params}
                   | {f"b/{k}" for k in self._buffers}) - set(arrays)
        if missing:
            raise ShapeMismatchError(
                f"checkpoint is missing entries: {sorted(missing)[:4]}")
