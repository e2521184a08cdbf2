"""Learned Kalman-style fusion of delta predictions with direct observations.

State is the flattened pose (J*3 values, mm) with a full covariance. The
transition, control, and observation matrices are all identity: the delta
head acts as the control input, the direct head as the observation. Process
and observation noise are learned diagonal covariances stored as
log-variances, so they stay positive under gradient descent and the
innovation solve stays cheap.

The covariance update uses the Joseph form, which keeps the matrix symmetric
positive semidefinite for any gain, not just the optimal one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Tensor, ops
from ..nn.params import ParameterStore


@dataclass
class FusionState:
    """x: (B, n) state mean in mm; cov: (B, n, n) covariance in mm^2."""

    x: Tensor
    cov: Tensor


class FusionFilter:
    """Identity-dynamics Kalman filter with learned diagonal Q and R."""

    def __init__(self, store: ParameterStore, prefix: str, n: int,
                 q_init: float = 1.0, r_init: float = 1.0,
                 sigma0: float = 100.0):
        if q_init <= 0 or r_init <= 0:
            raise ValueError("noise variances must start positive")
        self.n = n
        self.sigma0 = sigma0
        self.log_q = store.param(f"{prefix}/log_q",
                                 np.full(n, np.log(q_init)))
        self.log_r = store.param(f"{prefix}/log_r",
                                 np.full(n, np.log(r_init)))

    def init_state(self, pose: Tensor) -> FusionState:
        """pose: (B, J, 3) first direct estimate; covariance starts sigma0*I."""
        b = pose.shape[0]
        x = pose.reshape(b, self.n)
        eye = (np.eye(self.n) * self.sigma0).astype(pose.dtype)
        cov = Tensor(np.broadcast_to(eye, (b, self.n, self.n)).copy())
        return FusionState(x, cov)

    def predict(self, state: FusionState, delta: Tensor) -> FusionState:
        """Advance by the delta head's displacement; covariance grows by Q."""
        b = state.x.shape[0]
        x = state.x + delta.reshape(b, self.n)
        cov = state.cov + ops.diag_embed(self.log_q.exp())
        return FusionState(x, cov)

    def correct(self, state: FusionState, obs: Tensor):
        """Blend in the direct observation; returns (fused (B, n), state)."""
        b = state.x.shape[0]
        z = obs.reshape(b, self.n)
        r = self.log_r.exp()
        innov_cov = ops.add_jitter(state.cov + ops.diag_embed(r))
        # K = cov (cov + R)^-1; the solve gives the transpose directly
        gain = ops.solve_spd(innov_cov, state.cov).swapaxes(-2, -1)
        resid = (z - state.x).reshape(b, self.n, 1)
        x = state.x + (gain @ resid).reshape(b, self.n)
        eye = Tensor(np.eye(self.n, dtype=state.x.dtype))
        i_k = eye - gain
        cov = (i_k @ state.cov @ i_k.swapaxes(-2, -1)
               + (gain * r) @ gain.swapaxes(-2, -1))
        return x, FusionState(x, cov)
