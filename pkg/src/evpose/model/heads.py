"""Pose output heads: direct regression and previous-pose-conditioned delta.

Both heads are small per-joint MLPs with shared weights across joints. The
delta head sees the previous pose estimate through a learned embedding; the
previous pose enters in metres so its scale matches the feature activations.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, concat, ops
from ..nn.params import ParameterStore

MM_TO_M = 1e-3


class PoseHeads:
    """Direct head D->D->3 and delta head (D+E)->D->3, weights per store."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 embed_dim: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed + 23)
        p = store.param
        s = 1.0 / np.sqrt(dim)
        self.d_w1 = p(f"{prefix}/d_w1", rng.normal(size=(dim, dim)) * s)
        self.d_b1 = p(f"{prefix}/d_b1", np.zeros(dim))
        self.d_w2 = p(f"{prefix}/d_w2", rng.normal(size=(dim, 3)) * s)
        self.d_b2 = p(f"{prefix}/d_b2", np.zeros(3))
        self.e_w = p(f"{prefix}/e_w",
                     rng.normal(size=(3, embed_dim)) / np.sqrt(3.0))
        self.e_b = p(f"{prefix}/e_b", np.zeros(embed_dim))
        cat = dim + embed_dim
        sc = 1.0 / np.sqrt(cat)
        self.x_w1 = p(f"{prefix}/x_w1", rng.normal(size=(cat, dim)) * sc)
        self.x_b1 = p(f"{prefix}/x_b1", np.zeros(dim))
        self.x_w2 = p(f"{prefix}/x_w2", rng.normal(size=(dim, 3)) * s)
        self.x_b2 = p(f"{prefix}/x_b2", np.zeros(3))

    def direct(self, feats: Tensor) -> Tensor:
        """(..., J, D) -> (..., J, 3) pose in mm; no output activation."""
        h = ops.linear(feats, self.d_w1, self.d_b1).silu()
        return ops.linear(h, self.d_w2, self.d_b2)

    def delta(self, feats: Tensor, prev_pose: Tensor) -> Tensor:
        """(..., J, D) features + (..., J, 3) previous pose (mm) -> (..., J, 3)
        displacement in mm."""
        emb = ops.linear(prev_pose * MM_TO_M, self.e_w, self.e_b).silu()
        h = concat([feats, emb], axis=-1)
        h = ops.linear(h, self.x_w1, self.x_b1).silu()
        return ops.linear(h, self.x_w2, self.x_b2)
