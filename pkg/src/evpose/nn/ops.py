"""Network building blocks: conv, norms, sampling, SPD solve, projection.

Ops that wrap a compiled kernel or an external derivative (the camera
Jacobian, the Cholesky solve) are primitives with hand-written backward
closures; the rest are compositions of Tensor primitives so their gradients
come for free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericFault
from .. import camera as cam_mod
from ..kernels import (bilinear_coord_grads, bilinear_gather,
                       bilinear_scatter, col2im, im2col)
from .tensor import Tensor, no_grad

_SPD_JITTER = 1e-9


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b). Weights are stored (fan_in, fan_out)."""
    out = x @ w
    return out if b is None else out + b


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1,
           pad: int = 1) -> Tensor:
    """2D convolution via patch extraction and one batched matmul.

    x: (F, C, H, W); w: (Co, C, kh, kw); b: (Co,) or None.

    One fused node: the (F, C*kh*kw, L) column buffer dwarfs every other
    activation, so it is dropped after the forward matmul and rebuilt from
    the saved input during backward instead of living in the graph.
    """
    f, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    w2d = w.data.reshape(co, ci * kh * kw)
    cols = im2col(np.ascontiguousarray(x.data), kh, kw, stride, pad)
    out = np.matmul(w2d, cols).reshape(f, co, oh, ow)
    del cols

    def vjp(g):
        g2d = np.ascontiguousarray(g.reshape(f, co, oh * ow))
        again = im2col(np.ascontiguousarray(x.data), kh, kw, stride, pad)
        gw = np.matmul(g2d, again.transpose(0, 2, 1)).sum(axis=0)
        gx = col2im(np.ascontiguousarray(np.matmul(w2d.T, g2d)),
                    c, h, wd, kh, kw, stride, pad)
        return gx, gw.reshape(w.shape)

    out_t = Tensor._result(out, (x, w), vjp, "conv2d")
    if b is not None:
        out_t = out_t + b.reshape(co, 1, 1)
    return out_t


@dataclass
class BNState:
    """Running statistics for one batchnorm layer.

    With track_stats False the layer always normalizes by batch statistics
    and never touches the buffers, which keeps repeated forward passes
    byte-identical (finite-difference checks rely on that).
    """

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    track_stats: bool = True

    @classmethod
    def create(cls, channels: int, dtype=np.float32, **kw) -> "BNState":
        return cls(np.zeros(channels, dtype), np.ones(channels, dtype), **kw)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState,
                training: bool) -> Tensor:
    """Per-channel normalization of (F, C, H, W) maps."""
    c = x.shape[1]
    shape = (1, c, 1, 1)
    use_batch = training or not state.track_stats
    if use_batch:
        mu = x.mean(axis=(0, 2, 3), keepdims=True)
        var = ((x - mu) * (x - mu)).mean(axis=(0, 2, 3), keepdims=True)
        if training and state.track_stats:
            with no_grad():
                m = state.momentum
                state.mean += m * (mu.data.reshape(c) - state.mean)
                state.var += m * (var.data.reshape(c) - state.var)
    else:
        mu = Tensor(state.mean.reshape(shape))
        var = Tensor(state.var.reshape(shape))
    xn = (x - mu) / (var + state.eps).sqrt()
    return xn * gamma.reshape(shape) + beta.reshape(shape)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor,
              eps: float = 1e-5) -> Tensor:
    """Normalization over the trailing feature axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) * (x - mu)).mean(axis=-1, keepdims=True)
    return (x - mu) / (var + eps).sqrt() * gamma + beta


def bilinear_sample(values: Tensor, ys: Tensor, xs: Tensor) -> Tensor:
    """Sample (B, H, W, C) maps at fractional (B, P) coordinates.

    Differentiable in the maps and in both coordinate arrays (border-clamped;
    coordinate gradients vanish outside the grid).
    """
    _, h, w, _ = values.shape
    vd = np.ascontiguousarray(values.data)
    yd = np.ascontiguousarray(ys.data)
    xd = np.ascontiguousarray(xs.data)
    out = bilinear_gather(vd, yd, xd)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gv = bilinear_scatter(g, yd, xd, h, w)
        gy, gx = bilinear_coord_grads(vd, yd, xd, g)
        return (gv, gy, gx)

    return Tensor._result(out, (values, ys, xs), vjp, "bilinear_sample")


def solve_spd(a: Tensor, b: Tensor) -> Tensor:
    """Solve A X = B for symmetric positive definite A (batched).

    A must pass a Cholesky factorization; failure raises NumericFault. The
    backward pass reuses solves against the same A.
    """
    try:
        np.linalg.cholesky(a.data)
    except np.linalg.LinAlgError as exc:
        raise NumericFault(f"matrix is not positive definite: {exc}") from exc
    vector = b.ndim == a.ndim - 1
    rhs = b.data[..., None] if vector else b.data
    x = np.linalg.solve(a.data, rhs)

    def vjp(g):
        gm = g[..., None] if vector else g
        gb = np.linalg.solve(a.data, gm)
        ga = -gb @ np.swapaxes(x, -1, -2)
        return (ga, gb[..., 0] if vector else gb)

    out = x[..., 0] if vector else x
    return Tensor._result(out, (a, b), vjp, "solve_spd")


def add_jitter(a: Tensor, scale: float = _SPD_JITTER) -> Tensor:
    """A + scale*I, keeping covariance updates safely positive definite."""
    n = a.shape[-1]
    return a + Tensor(np.eye(n, dtype=a.dtype) * scale)


def diag_embed(v: Tensor) -> Tensor:
    """(..., n) -> (..., n, n) with v on the diagonal."""
    n = v.shape[-1]
    eye = Tensor(np.eye(n, dtype=v.dtype))
    return v.reshape(v.shape + (1,)) * eye


def project_points(points: Tensor, cam) -> Tensor:
    """Differentiable lenient fisheye projection of (..., 3) points."""
    px, jac = cam_mod.project_jacobian(points.data, cam)

    def vjp(g):
        return (np.einsum("...k,...kc->...c", g, jac).astype(points.dtype),)

    return Tensor._result(px.astype(points.dtype), (points,), vjp,
                          "project_points")
