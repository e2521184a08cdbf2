"""Diagonal complex state-space sequence layers.

Each core owns P complex modes shared across feature channels: the state
update is z_t = Abar * z_{t-1} + Bbar x_t (elementwise in the modes), the
output reads the state BEFORE it absorbs the current input,

    y_t = 2 Re(C z_t) + skip * x_t,   z_{t+1} = Abar z_t + Bbar x_t,

so a causal core emits a one-step-delayed view of the input stream; the
feedthrough term carries the instantaneous part. Complex numbers travel as
(real, imag) Tensor pairs so the whole layer differentiates through the
stock engine.

Three equivalent evaluation routes exist: a parallel prefix scan over the
whole sequence (training and batch evaluation), a sequential per-step loop
(the streaming engine), and the bidirectional wrapper that runs an
independent backward core over the reversed sequence. Parallel and
sequential routes agree to float round-off by construction, and the tests
hold them to that.
"""

from __future__ import annotations

import numpy as np

from ..nn.params import ParameterStore
from ..nn.tensor import Tensor, concat, stack
from ..nn import ops


def _cmul(ar, ai, br, bi):
    """(ar + i ai) * (br + i bi) on Tensor pairs."""
    return ar * br - ai * bi, ar * bi + ai * br


def scan_states(ar, ai, br, bi, z0r, z0i):
    """Inclusive prefix states of z_t = a_t z_{t-1} + b_t, z_{-1} = z0.

    All arguments (B, N, P) except z0 (B, P); a is typically constant along
    N but the scan does not rely on that. Runs log2(N) Hillis-Steele
    passes, each composing (a, b) pairs: (a2, b2) after (a1, b1) gives
    (a2*a1, a2*b1 + b2). Returns (B, N, P) state pairs.
    """
    n = ar.shape[1]
    shift = 1
    while shift < n:
        head_ar, head_ai = ar[:, :shift], ai[:, :shift]
        head_br, head_bi = br[:, :shift], bi[:, :shift]
        tail_ar, tail_ai = ar[:, shift:], ai[:, shift:]
        tail_br, tail_bi = br[:, shift:], bi[:, shift:]
        prev_ar, prev_ai = ar[:, :-shift], ai[:, :-shift]
        prev_br, prev_bi = br[:, :-shift], bi[:, :-shift]
        new_ar, new_ai = _cmul(tail_ar, tail_ai, prev_ar, prev_ai)
        mix_r, mix_i = _cmul(tail_ar, tail_ai, prev_br, prev_bi)
        new_br = mix_r + tail_br
        new_bi = mix_i + tail_bi
        ar = concat([head_ar, new_ar], axis=1)
        ai = concat([head_ai, new_ai], axis=1)
        br = concat([head_br, new_br], axis=1)
        bi = concat([head_bi, new_bi], axis=1)
        shift *= 2
    z0r = z0r.reshape(z0r.shape[0], 1, z0r.shape[1])
    z0i = z0i.reshape(z0i.shape[0], 1, z0i.shape[1])
    carry_r, carry_i = _cmul(ar, ai, z0r, z0i)
    return carry_r + br, carry_i + bi


def ssm_apply(abar, bbar, c_out, skip, x, z0=None, sequential=False):
    """Run the discretized recurrence over a batch of sequences.

    abar: ((P,), (P,)) complex decay per mode. bbar: ((D, P), (D, P))
    input matrix. c_out: ((P, D), (P, D)) output matrix. skip: (D,).
    x: (B, N, D). z0: optional ((B, P), (B, P)). Returns y (B, N, D) and
    the final state pair.
    """
    abar_r, abar_i = abar
    bbar_r, bbar_i = bbar
    c_r, c_i = c_out
    b, n, _ = x.shape
    p = abar_r.shape[0]
    if z0 is None:
        zeros = Tensor(np.zeros((b, p), dtype=x.dtype))
        z0 = (zeros, zeros)
    z0r, z0i = z0

    ur = x @ bbar_r  # (B, N, P)
    ui = x @ bbar_i

    if sequential:
        zr, zi = z0r, z0i
        outs = []
        for t in range(n):
            outs.append(2.0 * (zr @ c_r - zi @ c_i) + x[:, t] * skip)
            step_r = abar_r * zr - abar_i * zi + ur[:, t]
            zi = abar_r * zi + abar_i * zr + ui[:, t]
            zr = step_r
        return stack(outs, axis=1), (zr, zi)

    ones = Tensor(np.ones((b, n, p), dtype=x.dtype))
    states_r, states_i = scan_states(abar_r * ones, abar_i * ones, ur, ui,
                                     z0r, z0i)
    # output reads the pre-update state: shift right, inject z0 in front
    zr_seq = concat([z0r.reshape(b, 1, p), states_r[:, :-1]], axis=1)
    zi_seq = concat([z0i.reshape(b, 1, p), states_i[:, :-1]], axis=1)
    y = 2.0 * (zr_seq @ c_r - zi_seq @ c_i) + x * skip
    return y, (states_r[:, -1], states_i[:, -1])


class SSMCore:
    """Parameters plus discretization for one scan direction."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 state_size: int, bandlimit: float = 1.0,
                 dt_range: tuple[float, float] = (0.05, 0.5), seed: int = 0):
        rng = np.random.default_rng(seed)
        p, d = state_size, dim
        self.dim, self.state_size = d, p
        self.log_neg_real = store.param(f"{prefix}/log_neg_real",
                                        np.full(p, np.log(0.5)))
        self.lam_imag = store.param(f"{prefix}/lam_imag",
                                    np.pi * np.arange(p, dtype=np.float64))
        self.log_dt = store.param(
            f"{prefix}/log_dt",
            np.linspace(np.log(dt_range[0]), np.log(dt_range[1]), p))
        self.b_real = store.param(f"{prefix}/b_real",
                                  rng.normal(size=(d, p)) / np.sqrt(d))
        self.b_imag = store.param(f"{prefix}/b_imag", np.zeros((d, p)))
        self.c_real = store.param(f"{prefix}/c_real",
                                  rng.normal(size=(p, d)) / np.sqrt(2 * p))
        self.c_imag = store.param(f"{prefix}/c_imag",
                                  rng.normal(size=(p, d)) / np.sqrt(2 * p))
        self.skip = store.param(f"{prefix}/skip", np.ones(d))
        # modes ranked by |Im lambda| at init; the slowest fraction stays on
        keep = int(round(bandlimit * p))
        order = np.argsort(np.abs(self.lam_imag.data), kind="stable")
        mask = np.zeros(p)
        mask[order[:keep]] = 1.0
        self.band_mask = store.buffer(f"{prefix}/band_mask",
                                      mask.astype(store.dtype))

    def discretize(self, dt_scale: float = 1.0):
        """Zero-order-hold matrices from the continuous parameters.

        Re(lambda) = -exp(log_neg_real) < 0 and dt = exp(log_dt) > 0, so
        |Abar| = exp(dt * Re(lambda)) < 1 for every parameter setting.
        """
        dt = self.log_dt.exp() * float(dt_scale)
        lam_r = -self.log_neg_real.exp()
        lam_i = self.lam_imag
        mag = (dt * lam_r).exp()
        abar_r = mag * (dt * lam_i).cos()
        abar_i = mag * (dt * lam_i).sin()
        # (abar - 1) / lambda, complex division by a nonzero lambda
        den = lam_r * lam_r + lam_i * lam_i
        num_r = abar_r - 1.0
        fac_r = (num_r * lam_r + abar_i * lam_i) / den
        fac_i = (abar_i * lam_r - num_r * lam_i) / den
        bbar_r, bbar_i = _cmul(self.b_real, self.b_imag, fac_r, fac_i)
        mask = Tensor(self.band_mask)
        c_r = self.c_real * mask.reshape(-1, 1)
        c_i = self.c_imag * mask.reshape(-1, 1)
        return (abar_r, abar_i), (bbar_r, bbar_i), (c_r, c_i)

    def forward(self, x: Tensor, z0=None, dt_scale: float = 1.0,
                sequential: bool = False):
        abar, bbar, c_out = self.discretize(dt_scale)
        return ssm_apply(abar, bbar, c_out, self.skip, x, z0, sequential)

    def step(self, x_t: Tensor, z, dt_scale: float = 1.0):
        """One recurrent step: x_t (B, D), z pair of (B, P)."""
        (abar_r, abar_i), (bbar_r, bbar_i), (c_r, c_i) = \
            self.discretize(dt_scale)
        zr, zi = z
        y = 2.0 * (zr @ c_r - zi @ c_i) + x_t * self.skip
        ur = x_t @ bbar_r
        ui = x_t @ bbar_i
        new_r = abar_r * zr - abar_i * zi + ur
        new_i = abar_r * zi + abar_i * zr + ui
        return y, (new_r, new_i)

    def init_state(self, batch: int, dtype) -> tuple[Tensor, Tensor]:
        zeros = Tensor(np.zeros((batch, self.state_size), dtype=dtype))
        return (zeros, zeros)


class SSMBlock:
    """Pre-norm residual block: LN -> scan -> SiLU -> projection -> +x.

    In bidirectional mode an independent backward core processes the
    time-reversed sequence; branch outputs are summed before the single
    shared projection. Causal modes run the forward core only, either by
    parallel scan or one step at a time.
    """

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 state_size: int, bandlimit: float, seed: int = 0):
        rng = np.random.default_rng(seed + 1)
        self.dim = dim
        self.fwd = SSMCore(store, f"{prefix}/fwd", dim, state_size,
                           bandlimit, seed=seed)
        self.bwd = SSMCore(store, f"{prefix}/bwd", dim, state_size,
                           bandlimit, seed=seed + 7)
        self.ln_gamma = store.param(f"{prefix}/ln_gamma", np.ones(dim))
        self.ln_beta = store.param(f"{prefix}/ln_beta", np.zeros(dim))
        self.proj_w = store.param(f"{prefix}/proj_w",
                                  rng.normal(size=(dim, dim)) / np.sqrt(dim))
        self.proj_b = store.param(f"{prefix}/proj_b", np.zeros(dim))

    def forward(self, x: Tensor, mode: str, z0=None, dt_scale: float = 1.0):
        """x: (B, N, D). mode: bidirectional | causal | causal-sequential.

        Returns (out, zT) where zT is the forward core's final state (the
        only state streaming needs).
        """
        h = ops.layernorm(x, self.ln_gamma, self.ln_beta)
        sequential = mode == "causal-sequential"
        y, z_t = self.fwd.forward(h, z0=z0, dt_scale=dt_scale,
                                  sequential=sequential)
        if mode == "bidirectional":
            y_b, _ = self.bwd.forward(h[:, ::-1], dt_scale=dt_scale)
            y = y + y_b[:, ::-1]
        out = x + ops.linear(y.silu(), self.proj_w, self.proj_b)
        return out, z_t

    def step(self, x_t: Tensor, z, dt_scale: float = 1.0):
        """One streaming step; x_t (B, D), z forward-core state pair."""
        h = ops.layernorm(x_t, self.ln_gamma, self.ln_beta)
        y, z_new = self.fwd.step(h, z, dt_scale=dt_scale)
        out = x_t + ops.linear(y.silu(), self.proj_w, self.proj_b)
        return out, z_new
