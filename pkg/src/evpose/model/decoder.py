"""Joint-query transformer decoder (single layer, post-norm).

A fixed set of learned query vectors — one per joint, index binding is
permanent — self-attend, cross-attend into the flattened feature-map memory,
and pass through a feed-forward block. The memory carries no positional
encoding, so cross-attention is invariant to the order of memory tokens.
"""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, ops
from ..nn.params import ParameterStore


def _attend(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention. q: (B, Nq, D), k/v: (B, Nk, D)."""
    bq, nq, d = q.shape
    nk = k.shape[-2]
    hd = d // heads
    qh = q.reshape(bq, nq, heads, hd).swapaxes(1, 2)
    kh = k.reshape(k.shape[0], nk, heads, hd).swapaxes(1, 2)
    vh = v.reshape(v.shape[0], nk, heads, hd).swapaxes(1, 2)
    logits = (qh @ kh.swapaxes(2, 3)) * (1.0 / np.sqrt(hd))
    mix = logits.softmax(axis=-1) @ vh  # (B, heads, Nq, hd)
    b = mix.shape[0]
    return mix.swapaxes(1, 2).reshape(b, nq, d)


class QueryDecoder:
    """One decoder layer over J learned queries."""

    def __init__(self, store: ParameterStore, prefix: str, mem_dim: int,
                 queries: int, dim: int, heads: int = 4, ffn_mult: int = 2,
                 seed: int = 0):
        if dim % heads:
            raise ValueError(f"dim {dim} must divide by heads {heads}")
        rng = np.random.default_rng(seed + 11)
        self.heads = heads
        s = 1.0 / np.sqrt(dim)
        sm = 1.0 / np.sqrt(mem_dim)
        p = store.param
        self.queries = p(f"{prefix}/queries",
                         rng.normal(size=(queries, dim)) * s)
        self.sa_q = p(f"{prefix}/sa_q", rng.normal(size=(dim, dim)) * s)
        self.sa_k = p(f"{prefix}/sa_k", rng.normal(size=(dim, dim)) * s)
        self.sa_v = p(f"{prefix}/sa_v", rng.normal(size=(dim, dim)) * s)
        self.sa_o = p(f"{prefix}/sa_o", rng.normal(size=(dim, dim)) * s)
        self.sa_ob = p(f"{prefix}/sa_ob", np.zeros(dim))
        self.ca_q = p(f"{prefix}/ca_q", rng.normal(size=(dim, dim)) * s)
        self.ca_k = p(f"{prefix}/ca_k", rng.normal(size=(mem_dim, dim)) * sm)
        self.ca_v = p(f"{prefix}/ca_v", rng.normal(size=(mem_dim, dim)) * sm)
        self.ca_o = p(f"{prefix}/ca_o", rng.normal(size=(dim, dim)) * s)
        self.ca_ob = p(f"{prefix}/ca_ob", np.zeros(dim))
        hidden = ffn_mult * dim
        self.ff_w1 = p(f"{prefix}/ff_w1", rng.normal(size=(dim, hidden)) * s)
        self.ff_b1 = p(f"{prefix}/ff_b1", np.zeros(hidden))
        self.ff_w2 = p(f"{prefix}/ff_w2",
                       rng.normal(size=(hidden, dim)) / np.sqrt(hidden))
        self.ff_b2 = p(f"{prefix}/ff_b2", np.zeros(dim))
        self.ln1_g = p(f"{prefix}/ln1_g", np.ones(dim))
        self.ln1_b = p(f"{prefix}/ln1_b", np.zeros(dim))
        self.ln2_g = p(f"{prefix}/ln2_g", np.ones(dim))
        self.ln2_b = p(f"{prefix}/ln2_b", np.zeros(dim))
        self.ln3_g = p(f"{prefix}/ln3_g", np.ones(dim))
        self.ln3_b = p(f"{prefix}/ln3_b", np.zeros(dim))

    def forward(self, memory: Tensor) -> Tensor:
        """memory: (B, L, mem_dim) -> per-joint features (B, J, D)."""
        j, d = self.queries.shape
        q = self.queries.reshape(1, j, d)
        # Query self-attention does not involve the memory; it stays batch-1
        # and broadcasts into the batch at the cross-attention step.
        sa = _attend(q @ self.sa_q, q @ self.sa_k, q @ self.sa_v, self.heads)
        x = ops.layernorm(q + ops.linear(sa, self.sa_o, self.sa_ob),
                          self.ln1_g, self.ln1_b)
        ca = _attend(x @ self.ca_q, memory @ self.ca_k, memory @ self.ca_v,
                     self.heads)
        x = ops.layernorm(x + ops.linear(ca, self.ca_o, self.ca_ob),
                          self.ln2_g, self.ln2_b)
        ff = ops.linear(ops.linear(x, self.ff_w1, self.ff_b1).silu(),
                        self.ff_w2, self.ff_b2)
        return ops.layernorm(x + ff, self.ln3_g, self.ln3_b)
