"""Deformable grid self-attention.

Each feature-map token predicts a handful of fractional sampling locations
(reference point + learned offset) per head, pulls values there by bilinear
interpolation, and blends them with predicted softmax weights. Offset and
weight projections start at zero, so at initialisation every token reads the
value map at its own reference point.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, ops
from ..nn.params import ParameterStore


def _grid_refs(h: int, w: int) -> np.ndarray:
    """Normalised uniform grid, row-major, one (y, x) pair per token."""
    ys = np.arange(h, dtype=np.float64) / max(h - 1, 1)
    xs = np.arange(w, dtype=np.float64) / max(w - 1, 1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gy.ravel(), gx.ravel()], axis=1)


class DeformableAttention:
    """Residual deformable self-attention over one fixed grid size."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 grid_hw: tuple[int, int], heads: int = 4, points: int = 4,
                 seed: int = 0):
        if dim % heads:
            raise ValueError(f"dim {dim} must divide by heads {heads}")
        rng = np.random.default_rng(seed + 3)
        self.dim = dim
        self.heads = heads
        self.points = points
        self.grid_hw = grid_hw
        h, w = grid_hw
        scale = 1.0 / np.sqrt(dim)
        # Reference points are trainable, shared across time.
        self.refs = store.param(f"{prefix}/refs", _grid_refs(h, w))
        self.w_val = store.param(f"{prefix}/w_val",
                                 rng.normal(size=(dim, dim)) * scale)
        self.b_val = store.param(f"{prefix}/b_val", np.zeros(dim))
        self.w_off = store.param(f"{prefix}/w_off",
                                 np.zeros((dim, heads * points * 2)))
        self.b_off = store.param(f"{prefix}/b_off",
                                 np.zeros(heads * points * 2))
        self.w_att = store.param(f"{prefix}/w_att",
                                 np.zeros((dim, heads * points)))
        self.b_att = store.param(f"{prefix}/b_att", np.zeros(heads * points))
        self.w_out = store.param(f"{prefix}/w_out",
                                 rng.normal(size=(dim, dim)) * scale)
        self.b_out = store.param(f"{prefix}/b_out", np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        """x: (F, C, H, W) -> same shape, residual included."""
        f, c, h, w = x.shape
        nh, k = self.heads, self.points
        hd = c // nh
        l = h * w
        tokens = x.reshape(f, c, l).swapaxes(1, 2)  # (F, L, C)

        vals = ops.linear(tokens, self.w_val, self.b_val)
        # (F, L, C) -> one value map per head: (F*nh, H, W, hd)
        vmaps = (vals.reshape(f, h, w, nh, hd)
                 .transpose((0, 3, 1, 2, 4))
                 .reshape(f * nh, h, w, hd))

        off = (ops.linear(tokens, self.w_off, self.b_off)
               .reshape(f, l, nh, k, 2)
               .transpose((0, 2, 1, 3, 4)))  # (F, nh, L, K, 2)
        # Offsets are in pixels around the (normalised) reference points.
        base_y = (self.refs[:, 0] * float(max(h - 1, 1))).reshape(1, 1, l, 1)
        base_x = (self.refs[:, 1] * float(max(w - 1, 1))).reshape(1, 1, l, 1)
        ys = (base_y + off[..., 0]).reshape(f * nh, l * k)
        xs = (base_x + off[..., 1]).reshape(f * nh, l * k)

        sampled = (ops.bilinear_sample(vmaps, ys, xs)
                   .reshape(f, nh, l, k, hd))
        logits = (ops.linear(tokens, self.w_att, self.b_att)
                  .reshape(f, l, nh, k)
                  .transpose((0, 2, 1, 3)))  # (F, nh, L, K)
        weights = logits.softmax(axis=-1).reshape(f, nh, l, k, 1)

        mixed = (weights * sampled).sum(axis=3)  # (F, nh, L, hd)
        mixed = mixed.transpose((0, 2, 1, 3)).reshape(f, l, c)
        out = tokens + ops.linear(mixed, self.w_out, self.b_out)
        return out.swapaxes(1, 2).reshape(f, c, h, w)
