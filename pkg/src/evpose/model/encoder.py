"""Spatiotemporal encoder: conv pyramid + deformable attention + SSM blocks.

Frames pass through a stem convolution and four stages (two residual units,
then a stride-2 downsample). After each stage the map runs through deformable
self-attention; at the configured stages every spatial location additionally
runs a state-space block over time, which is where information crosses
window boundaries. The final map is flattened into memory tokens and decoded
into one feature vector per joint query.

All per-frame ops treat time as extra batch, so a (B, N) clip is processed
as B*N frames; only the SSM blocks see the time axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError
from ..nn import Tensor, ops
from ..nn.ops import BNState
from ..nn.params import ParameterStore
from .attention import DeformableAttention
from .decoder import QueryDecoder
from .ssm import SSMBlock

MODES = ("bidirectional", "causal", "causal-sequential")


def _conv_init(rng, co: int, ci: int, k: int = 3) -> np.ndarray:
    return rng.normal(size=(co, ci, k, k)) * np.sqrt(2.0 / (ci * k * k))


class _BN:
    def __init__(self, store: ParameterStore, prefix: str, c: int):
        self.gamma = store.param(f"{prefix}_g", np.ones(c))
        self.beta = store.param(f"{prefix}_b", np.zeros(c))
        self.state = BNState(
            store.buffer(f"{prefix}_mean", np.zeros(c, store.dtype)),
            store.buffer(f"{prefix}_var", np.ones(c, store.dtype)))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batchnorm2d(x, self.gamma, self.beta, self.state, training)


class _ResUnit:
    """conv-BN-SiLU twice, added back onto the input."""

    def __init__(self, store, prefix, c, rng):
        self.w1 = store.param(f"{prefix}/w1", _conv_init(rng, c, c))
        self.bn1 = _BN(store, f"{prefix}/bn1", c)
        self.w2 = store.param(f"{prefix}/w2", _conv_init(rng, c, c))
        self.bn2 = _BN(store, f"{prefix}/bn2", c)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        h = self.bn1(ops.conv2d(x, self.w1, None), training).silu()
        h = self.bn2(ops.conv2d(h, self.w2, None), training).silu()
        return x + h


class _Stage:
    """Two residual units then a stride-2 3x3 conv to the next width."""

    def __init__(self, store, prefix, c_in, c_out, rng):
        self.res1 = _ResUnit(store, f"{prefix}/res1", c_in, rng)
        self.res2 = _ResUnit(store, f"{prefix}/res2", c_in, rng)
        self.w_down = store.param(f"{prefix}/down_w",
                                  _conv_init(rng, c_out, c_in))
        self.b_down = store.param(f"{prefix}/down_b", np.zeros(c_out))

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeMismatchError(
                f"stage input {x.shape[2]}x{x.shape[3]} is not even")
        h = self.res1.forward(x, training)
        h = self.res2.forward(h, training)
        return ops.conv2d(h, self.w_down, self.b_down, stride=2)


@dataclass
class EncoderState:
    """Carried latent state: one (real, imag) pair per SSM stage."""

    stages: dict[int, tuple[Tensor, Tensor]]


class SpatiotemporalEncoder:
    """LNES frame sequences -> per-window joint query features."""

    def __init__(self, store: ParameterStore, img_hw: tuple[int, int],
                 widths=(8, 16, 32, 48, 64), stem_stride: int = 1,
                 ssm_stages=(2, 4), ssm_state: int = 16,
                 bandlimit: float = 0.5, heads: int = 4, points: int = 4,
                 queries: int = 16, query_dim: int = 64,
                 decoder_heads: int = 4, ffn_mult: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        h, w = img_hw
        self.img_hw = img_hw
        self.widths = tuple(widths)
        self.ssm_stages = tuple(sorted(ssm_stages))
        self.queries = queries
        self.query_dim = query_dim

        self.stem_w = store.param("enc/stem_w",
                                  _conv_init(rng, widths[0], 2))
        self.stem_stride = stem_stride
        self.stem_bn = _BN(store, "enc/stem_bn", widths[0])

        h, w = h // stem_stride, w // stem_stride
        self.stages: list[_Stage] = []
        self.attn: list[DeformableAttention] = []
        self.ssm: dict[int, SSMBlock] = {}
        self.grids: dict[int, tuple[int, int]] = {}
        for s in range(1, 5):
            c_in, c_out = widths[s - 1], widths[s]
            self.stages.append(_Stage(store, f"enc/s{s}", c_in, c_out, rng))
            h, w = h // 2, w // 2
            self.grids[s] = (h, w)
            self.attn.append(DeformableAttention(
                store, f"enc/s{s}/attn", c_out, (h, w), heads, points,
                seed=seed + s))
            if s in self.ssm_stages:
                self.ssm[s] = SSMBlock(store, f"enc/s{s}/ssm", c_out,
                                       ssm_state, bandlimit,
                                       seed=seed + 10 * s)
        self.decoder = QueryDecoder(store, "enc/dec", mem_dim=widths[4],
                                    queries=queries, dim=query_dim,
                                    heads=decoder_heads, ffn_mult=ffn_mult,
                                    seed=seed)

    @classmethod
    def from_config(cls, store: ParameterStore, cfg,
                    seed: int | None = None) -> "SpatiotemporalEncoder":
        return cls(
            store, (cfg["img.height"], cfg["img.width"]),
            widths=cfg["spem.widths"], stem_stride=cfg["spem.stem_stride"],
            ssm_stages=cfg["spem.ssm_stages"], ssm_state=cfg["spem.ssm_state"],
            bandlimit=cfg["spem.bandlimit"], heads=cfg["spem.heads"],
            points=cfg["spem.points"], queries=cfg["spem.queries"],
            query_dim=cfg["spem.query_dim"],
            decoder_heads=cfg["spem.decoder_heads"],
            ffn_mult=cfg["spem.ffn_mult"],
            seed=cfg["train.seed"] if seed is None else seed)

    # -- state ---------------------------------------------------------------

    def init_state(self, batch: int, dtype) -> EncoderState:
        states = {}
        for s, block in self.ssm.items():
            gh, gw = self.grids[s]
            states[s] = block.fwd.init_state(batch * gh * gw, dtype)
        return EncoderState(states)

    def _check_state(self, state: EncoderState, batch: int) -> None:
        for s, block in self.ssm.items():
            gh, gw = self.grids[s]
            zr, _ = state.stages[s]
            want = (batch * gh * gw, block.fwd.state_size)
            if tuple(zr.shape) != want:
                raise ShapeMismatchError(
                    f"stage {s} state has shape {tuple(zr.shape)}, "
                    f"expected {want}")

    # -- full-sequence path ----------------------------------------------------

    def forward(self, frames: Tensor, mode: str = "bidirectional",
                state: EncoderState | None = None, dt_scale: float = 1.0,
                training: bool = False):
        """frames: (B, N, 2, H, W) -> ((B, N, J, D) features, EncoderState).

        mode selects how the SSM blocks treat time; carried state is only
        meaningful for the causal modes.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        b, n = frames.shape[:2]
        if state is None:
            state = self.init_state(b, frames.dtype)
        else:
            self._check_state(state, b)
        x = frames.reshape((b * n,) + frames.shape[2:])
        x = self.stem_bn(
            ops.conv2d(x, self.stem_w, None, stride=self.stem_stride),
            training).silu()
        new_states = {}
        for s in range(1, 5):
            x = self.stages[s - 1].forward(x, training)
            x = self.attn[s - 1].forward(x)
            if s in self.ssm:
                gh, gw = self.grids[s]
                c = self.widths[s]
                seq = (x.reshape(b, n, c, gh, gw)
                       .transpose((0, 3, 4, 1, 2))
                       .reshape(b * gh * gw, n, c))
                seq, z_t = self.ssm[s].forward(seq, mode,
                                               z0=state.stages[s],
                                               dt_scale=dt_scale)
                new_states[s] = z_t
                x = (seq.reshape(b, gh, gw, n, c)
                     .transpose((0, 3, 4, 1, 2))
                     .reshape(b * n, c, gh, gw))
        gh, gw = self.grids[4]
        memory = x.reshape(b * n, self.widths[4], gh * gw).swapaxes(1, 2)
        feats = self.decoder.forward(memory)
        feats = feats.reshape(b, n, self.queries, self.query_dim)
        return feats, EncoderState(new_states)

    # -- one-window streaming path ---------------------------------------------

    def step(self, frame: Tensor, state: EncoderState,
             dt_scale: float = 1.0):
        """frame: (B, 2, H, W) -> ((B, J, D) features, EncoderState)."""
        b = frame.shape[0]
        self._check_state(state, b)
        x = self.stem_bn(
            ops.conv2d(frame, self.stem_w, None, stride=self.stem_stride),
            training=False).silu()
        new_states = {}
        for s in range(1, 5):
            x = self.stages[s - 1].forward(x, training=False)
            x = self.attn[s - 1].forward(x)
            if s in self.ssm:
                gh, gw = self.grids[s]
                c = self.widths[s]
                tok = (x.reshape(b, c, gh, gw)
                       .transpose((0, 2, 3, 1))
                       .reshape(b * gh * gw, c))
                tok, z_new = self.ssm[s].step(tok, state.stages[s],
                                              dt_scale=dt_scale)
                new_states[s] = z_new
                x = (tok.reshape(b, gh, gw, c)
                     .transpose((0, 3, 1, 2)))
        gh, gw = self.grids[4]
        memory = x.reshape(b, self.widths[4], gh * gw).swapaxes(1, 2)
        return self.decoder.forward(memory), EncoderState(new_states)
