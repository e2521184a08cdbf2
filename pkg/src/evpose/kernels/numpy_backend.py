"""Pure-numpy implementations of the hot kernels.

These are the reference semantics: the compiled twins in ``_ckernels`` must
match them element-for-element (see tests/test_kernels.py). Everything here
is vectorised numpy; the compiled versions exist because a few of these
(scatter-add, event quantisation, surface accumulation) spend most of their
time in ufunc dispatch rather than arithmetic.
"""

from __future__ import annotations

import numpy as np


def lnes_accumulate(surface, xs, ys, chans, values):
    """Max-accumulate normalized timestamps into an (H, W, 2) surface.

    Values are monotone in event time, so max-accumulation is exactly
    latest-wins regardless of input order.
    """
    np.maximum.at(surface, (ys, xs, chans), values)


def im2col(x, kh, kw, stride, pad):
    """(F, C, H, W) -> (F, C*kh*kw, OH*OW) patch matrix for conv-as-matmul."""
    f, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((f, c, kh, kw, oh, ow), x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride,
                                 j:j + stride * ow:stride]
    return cols.reshape(f, c * kh * kw, oh * ow)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    """Adjoint of im2col: scatter patch columns back to (F, C, H, W)."""
    f = cols.shape[0]
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(f, c, kh, kw, oh, ow)
    out = np.zeros((f, c, h + 2 * pad, w + 2 * pad), cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride,
                j:j + stride * ow:stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w].copy()
    return out


def _corners(ys, xs, h, w):
    """Clamped corner indices and float64 fractional offsets.

    Internal bilinear math runs in float64 regardless of the map dtype so
    both backends round identically; outputs are cast once at the end.
    """
    ysc = np.clip(np.asarray(ys, np.float64), 0.0, h - 1.0)
    xsc = np.clip(np.asarray(xs, np.float64), 0.0, w - 1.0)
    y0 = np.clip(np.floor(ysc), 0, max(h - 2, 0)).astype(np.int64)
    x0 = np.clip(np.floor(xsc), 0, max(w - 2, 0)).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    return y0, x0, y1, x1, ysc - y0, xsc - x0


def _corner_values(values, y0, x0, y1, x1):
    b, h, w, _ = values.shape
    flat = values.reshape(b, h * w, -1).astype(np.float64)
    bi = np.arange(b)[:, None]
    return (flat[bi, y0 * w + x0], flat[bi, y0 * w + x1],
            flat[bi, y1 * w + x0], flat[bi, y1 * w + x1])


def _weights(fy, fx):
    return ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)


def bilinear_gather(values, ys, xs):
    """Sample (B, H, W, C) maps at (B, P) fractional pixel coords.

    Coordinates are border-clamped; returns (B, P, C) in the map dtype.
    """
    _, h, w, _ = values.shape
    y0, x0, y1, x1, fy, fx = _corners(ys, xs, h, w)
    v00, v01, v10, v11 = _corner_values(values, y0, x0, y1, x1)
    w00, w01, w10, w11 = (wt[..., None] for wt in _weights(fy, fx))
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    return out.astype(values.dtype)


def bilinear_scatter(grad, ys, xs, h, w):
    """Adjoint of bilinear_gather w.r.t. the value maps.

    grad: (B, P, C) upstream gradient; returns (B, H, W, C). Corner
    contributions are applied point by point (corners of one point before
    the next) so collisions accumulate in a fixed order.
    """
    b, p, c = grad.shape
    y0, x0, y1, x1, fy, fx = _corners(ys, xs, h, w)
    wgt = np.stack(_weights(fy, fx), axis=-1)  # (B, P, 4)
    contrib = wgt[..., None] * grad.astype(np.float64)[:, :, None, :]
    idx = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
                   axis=-1)
    idx = idx + (np.arange(b) * h * w)[:, None, None]
    out = np.zeros((b * h * w, c), grad.dtype)
    np.add.at(out, idx.ravel(), contrib.astype(grad.dtype).reshape(-1, c))
    return out.reshape(b, h, w, c)


def bilinear_coord_grads(values, ys, xs, grad):
    """Gradients of bilinear_gather w.r.t. the sampling coordinates.

    Zero outside the grid (border clamp). Returns (gy, gx), each (B, P).
    """
    _, h, w, _ = values.shape
    y0, x0, y1, x1, fy, fx = _corners(ys, xs, h, w)
    v00, v01, v10, v11 = _corner_values(values, y0, x0, y1, x1)
    g = grad.astype(np.float64)
    term_y = g * ((v10 - v00) * (1 - fx)[..., None] + (v11 - v01) * fx[..., None])
    term_x = g * ((v01 - v00) * (1 - fy)[..., None] + (v11 - v10) * fy[..., None])
    # sequential channel reduction, matching the compiled twin's loop order
    sy = np.cumsum(term_y, axis=-1)[..., -1]
    sx = np.cumsum(term_x, axis=-1)[..., -1]
    ysa, xsa = np.asarray(ys), np.asarray(xs)
    gy = np.where((ysa >= 0.0) & (ysa <= h - 1.0), sy, 0.0)
    gx = np.where((xsa >= 0.0) & (xsa <= w - 1.0), sx, 0.0)
    return gy.astype(values.dtype), gx.astype(values.dtype)


def emit_events(i_now, i_prev, ref, t_prev_us, dt_us, contrast):
    """Quantise one micro-step of log-intensity change into events.

    Per pixel, emits floor(|i_now - ref| / contrast) events with the sign of
    the change, timestamps linearly interpolated between the bracketing
    micro-samples (strictly after t_prev, at most t_prev + dt), and advances
    ref by the emitted quanta so the residual stays below one threshold.
    Returns (xs, ys, ts, ps) in row-major pixel order, ascending within a
    pixel; the caller is responsible for time-sorting. Images must be
    float64: ref is advanced in place and the quantisation arithmetic has to
    agree bit for bit across backends.
    """
    if not (i_now.dtype == i_prev.dtype == ref.dtype == np.float64):
        raise TypeError("emit_events requires float64 images")
    d = i_now - ref
    n = np.floor(np.abs(d) / contrast).astype(np.int64)
    ys, xs = np.nonzero(n > 0)
    if ys.size == 0:
        return (np.empty(0, np.uint16), np.empty(0, np.uint16),
                np.empty(0, np.uint64), np.empty(0, np.int8))
    npx = n[ys, xs]
    sgn = np.sign(d[ys, xs])
    total = int(npx.sum())
    rep_y = np.repeat(ys, npx)
    rep_x = np.repeat(xs, npx)
    rep_s = np.repeat(sgn, npx)
    starts = np.cumsum(npx) - npx
    i_within = np.arange(total) - np.repeat(starts, npx) + 1
    ref_px = np.repeat(ref[ys, xs], npx)
    prev_px = np.repeat(i_prev[ys, xs], npx)
    now_px = np.repeat(i_now[ys, xs], npx)
    frac = (ref_px + rep_s * i_within * contrast - prev_px) / (now_px - prev_px)
    frac = np.clip(frac, 0.0, 1.0)
    ts = np.uint64(t_prev_us) + np.maximum(
        np.ceil(frac * dt_us), 1.0).astype(np.uint64)
    ref[ys, xs] += sgn * npx * contrast
    return (rep_x.astype(np.uint16), rep_y.astype(np.uint16),
            ts, rep_s.astype(np.int8))
