"""The full pose network: encoder features -> heads -> pose combination.

Three combination modes share the same two heads:
  fused   delta drives the filter's predict step, direct is the observation
  direct  every window's pose is the direct head output alone
  naive   dead reckoning: previous estimate plus the delta head output

The first window of a stream always takes the direct pose; in fused mode it
also initialises the filter state. Carried state (encoder SSM latents,
previous pose, filter state) travels in a StreamState so chunked evaluation
and true streaming follow the exact same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..nn import Tensor, stack
from ..nn.params import ParameterStore
from .encoder import EncoderState, SpatiotemporalEncoder
from .fusion import FusionFilter, FusionState
from .heads import PoseHeads

PRM_MODES = ("fused", "direct", "naive")


@dataclass
class StreamState:
    enc: EncoderState
    prev: Tensor | None        # (B, J, 3) last pose estimate, mm
    fusion: FusionState | None


@dataclass
class Rollout:
    poses: Tensor              # (B, N, J, 3) final estimates, mm
    deltas: Tensor | None      # (B, N-1, J, 3) delta head outputs, or None
    state: StreamState


class PoseNet:
    """Encoder + pose heads + fusion filter over one parameter store."""

    def __init__(self, store: ParameterStore, cfg, seed: int | None = None):
        self.joints = cfg["spem.queries"]
        self.mode = cfg["prm.mode"]
        self.encoder = SpatiotemporalEncoder.from_config(store, cfg, seed)
        self.heads = PoseHeads(
            store, "prm/heads", cfg["spem.query_dim"],
            embed_dim=cfg["prm.embed_dim"],
            seed=cfg["train.seed"] if seed is None else seed)
        self.fusion = FusionFilter(
            store, "prm/fusion", self.joints * 3,
            q_init=cfg["prm.q_init"], r_init=cfg["prm.r_init"],
            sigma0=cfg["prm.sigma0"])

    def init_stream(self, batch: int, dtype) -> StreamState:
        return StreamState(self.encoder.init_state(batch, dtype), None, None)

    def _advance(self, f_t: Tensor, prm_mode: str, prev, fstate):
        """One window: (B, J, D) features -> (pose, prev, fstate, delta)."""
        p_d = self.heads.direct(f_t)
        if prev is None:
            fstate = self.fusion.init_state(p_d) if prm_mode == "fused" else None
            return p_d, p_d, fstate, None
        if prm_mode == "direct":
            return p_d, p_d, fstate, None
        delta = self.heads.delta(f_t, prev)
        if prm_mode == "naive":
            pose = prev + delta
            return pose, pose, fstate, delta
        st = self.fusion.predict(fstate, delta)
        x, st = self.fusion.correct(st, p_d)
        pose = x.reshape(p_d.shape)
        return pose, pose, st, delta

    def rollout(self, frames: Tensor, enc_mode: str,
                prm_mode: str | None = None,
                carry: StreamState | None = None, dt_scale: float = 1.0,
                training: bool = False):
        """frames: (B, N, 2, H, W) -> Rollout with poses (B, N, J, 3) in mm."""
        prm_mode = self.mode if prm_mode is None else prm_mode
        if prm_mode not in PRM_MODES:
            raise ValueError(f"unknown combination mode {prm_mode!r}")
        feats, enc_state = self.encoder.forward(
            frames, enc_mode, state=carry.enc if carry else None,
            dt_scale=dt_scale, training=training)
        n = feats.shape[1]
        prev = carry.prev if carry else None
        fstate = carry.fusion if carry else None
        if prm_mode == "direct":
            # no recurrence through the heads: one batched MLP pass
            poses = self.heads.direct(feats)
            return Rollout(poses, None,
                           StreamState(enc_state, poses[:, -1], fstate))
        poses, deltas = [], []
        for t in range(n):
            pose, prev, fstate, delta = self._advance(feats[:, t], prm_mode,
                                                      prev, fstate)
            poses.append(pose)
            if delta is not None:
                deltas.append(delta)
        out_deltas = stack(deltas, axis=1) if deltas else None
        return Rollout(stack(poses, axis=1), out_deltas,
                       StreamState(enc_state, prev, fstate))

    def step(self, frame: Tensor, carry: StreamState,
             prm_mode: str | None = None, dt_scale: float = 1.0):
        """One streaming window: (B, 2, H, W) -> ((B, J, 3), StreamState)."""
        prm_mode = self.mode if prm_mode is None else prm_mode
        if prm_mode not in PRM_MODES:
            raise ValueError(f"unknown combination mode {prm_mode!r}")
        f_t, enc_state = self.encoder.step(frame, carry.enc,
                                           dt_scale=dt_scale)
        pose, prev, fstate, _ = self._advance(f_t, prm_mode, carry.prev,
                                              carry.fusion)
        return pose, StreamState(enc_state, prev, fstate)
