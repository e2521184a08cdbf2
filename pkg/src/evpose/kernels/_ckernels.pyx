# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of :mod:`evpose.kernels.numpy_backend`.

Same five contracts, element-identical results; the difference is that these
run as tight C loops instead of chains of ufunc calls. See that module's
docstrings for the semantics.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, fabs, floor

cnp.import_array()

ctypedef fused floating:
    float
    double


def lnes_accumulate(float[:, :, ::1] surface,
                    cnp.int64_t[::1] xs, cnp.int64_t[::1] ys,
                    cnp.int64_t[::1] chans, float[::1] values):
    cdef Py_ssize_t i, n = xs.shape[0]
    cdef float v
    for i in range(n):
        v = values[i]
        if v > surface[ys[i], xs[i], chans[i]]:
            surface[ys[i], xs[i], chans[i]] = v


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t f = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((f, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t fi, ci, i, j, oy, ox, iy, ix, row
    for fi in range(f):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oy in range(oh):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(ow):
                            ix = ox * stride + j - pad
                            if 0 <= ix < w:
                                out[fi, row, oy * ow + ox] = x[fi, ci, iy, ix]
    return out_arr


def col2im(floating[:, :, ::1] cols, int c, int h, int w,
           int kh, int kw, int stride, int pad):
    cdef Py_ssize_t f = cols.shape[0]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((f, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t fi, ci, i, j, oy, ox, iy, ix, row
    for fi in range(f):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oy in range(oh):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(ow):
                            ix = ox * stride + j - pad
                            if 0 <= ix < w:
                                out[fi, ci, iy, ix] += cols[fi, row, oy * ow + ox]
    return out_arr


cdef inline void _corner(double yc, double xc, Py_ssize_t h, Py_ssize_t w,
                         Py_ssize_t *y0, Py_ssize_t *x0,
                         Py_ssize_t *y1, Py_ssize_t *x1,
                         double *fy, double *fx) nogil:
    if yc < 0:
        yc = 0
    elif yc > h - 1:
        yc = h - 1
    if xc < 0:
        xc = 0
    elif xc > w - 1:
        xc = w - 1
    y0[0] = <Py_ssize_t>floor(yc)
    x0[0] = <Py_ssize_t>floor(xc)
    if y0[0] > h - 2:
        y0[0] = h - 2 if h > 1 else 0
    if x0[0] > w - 2:
        x0[0] = w - 2 if w > 1 else 0
    y1[0] = y0[0] + 1 if y0[0] + 1 < h else h - 1
    x1[0] = x0[0] + 1 if x0[0] + 1 < w else w - 1
    fy[0] = yc - y0[0]
    fx[0] = xc - x0[0]


def bilinear_gather(floating[:, :, :, ::1] values,
                    floating[:, ::1] ys, floating[:, ::1] xs):
    cdef Py_ssize_t b = values.shape[0], h = values.shape[1]
    cdef Py_ssize_t w = values.shape[2], c = values.shape[3]
    cdef Py_ssize_t p = ys.shape[1]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((b, p, c), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t bi, pi, ci, y0, x0, y1, x1
    cdef double fy, fx, w00, w01, w10, w11
    for bi in range(b):
        for pi in range(p):
            _corner(<double>ys[bi, pi], <double>xs[bi, pi], h, w,
                    &y0, &x0, &y1, &x1, &fy, &fx)
            w00 = (1 - fy) * (1 - fx)
            w01 = (1 - fy) * fx
            w10 = fy * (1 - fx)
            w11 = fy * fx
            for ci in range(c):
                out[bi, pi, ci] = <floating>(
                    w00 * values[bi, y0, x0, ci] + w01 * values[bi, y0, x1, ci]
                    + w10 * values[bi, y1, x0, ci] + w11 * values[bi, y1, x1, ci])
    return out_arr


def bilinear_scatter(floating[:, :, ::1] grad,
                     floating[:, ::1] ys, floating[:, ::1] xs,
                     Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b = grad.shape[0], p = grad.shape[1], c = grad.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((b, h, w, c), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t bi, pi, ci, y0, x0, y1, x1
    cdef double fy, fx, w00, w01, w10, w11, g
    for bi in range(b):
        for pi in range(p):
            _corner(<double>ys[bi, pi], <double>xs[bi, pi], h, w,
                    &y0, &x0, &y1, &x1, &fy, &fx)
            w00 = (1 - fy) * (1 - fx)
            w01 = (1 - fy) * fx
            w10 = fy * (1 - fx)
            w11 = fy * fx
            for ci in range(c):
                g = <double>grad[bi, pi, ci]
                out[bi, y0, x0, ci] += <floating>(w00 * g)
                out[bi, y0, x1, ci] += <floating>(w01 * g)
                out[bi, y1, x0, ci] += <floating>(w10 * g)
                out[bi, y1, x1, ci] += <floating>(w11 * g)
    return out_arr


def bilinear_coord_grads(floating[:, :, :, ::1] values,
                         floating[:, ::1] ys, floating[:, ::1] xs,
                         floating[:, :, ::1] grad):
    cdef Py_ssize_t b = values.shape[0], h = values.shape[1]
    cdef Py_ssize_t w = values.shape[2], c = values.shape[3]
    cdef Py_ssize_t p = ys.shape[1]
    dtype = np.float32 if floating is float else np.float64
    gy_arr = np.zeros((b, p), dtype=dtype)
    gx_arr = np.zeros((b, p), dtype=dtype)
    cdef floating[:, ::1] gy = gy_arr
    cdef floating[:, ::1] gx = gx_arr
    cdef Py_ssize_t bi, pi, ci, y0, x0, y1, x1
    cdef double fy, fx, sy, sx, g, yraw, xraw, v00, v01, v10, v11
    for bi in range(b):
        for pi in range(p):
            yraw = <double>ys[bi, pi]
            xraw = <double>xs[bi, pi]
            _corner(yraw, xraw, h, w, &y0, &x0, &y1, &x1, &fy, &fx)
            sy = 0.0
            sx = 0.0
            for ci in range(c):
                g = <double>grad[bi, pi, ci]
                v00 = <double>values[bi, y0, x0, ci]
                v01 = <double>values[bi, y0, x1, ci]
                v10 = <double>values[bi, y1, x0, ci]
                v11 = <double>values[bi, y1, x1, ci]
                sy += g * ((v10 - v00) * (1 - fx) + (v11 - v01) * fx)
                sx += g * ((v01 - v00) * (1 - fy) + (v11 - v10) * fy)
            if 0.0 <= yraw <= h - 1.0:
                gy[bi, pi] = <floating>sy
            if 0.0 <= xraw <= w - 1.0:
                gx[bi, pi] = <floating>sx
    return gy_arr, gx_arr


def emit_events(double[:, ::1] i_now, double[:, ::1] i_prev, double[:, ::1] ref,
                unsigned long long t_prev_us, unsigned long long dt_us,
                double contrast):
    cdef Py_ssize_t h = i_now.shape[0], w = i_now.shape[1]
    cdef Py_ssize_t y, x, k, total = 0
    cdef long long n
    cdef double d
    for y in range(h):
        for x in range(w):
            d = i_now[y, x] - ref[y, x]
            total += <long long>floor(fabs(d) / contrast)
    xs_arr = np.empty(total, dtype=np.uint16)
    ys_arr = np.empty(total, dtype=np.uint16)
    ts_arr = np.empty(total, dtype=np.uint64)
    ps_arr = np.empty(total, dtype=np.int8)
    if total == 0:
        return xs_arr, ys_arr, ts_arr, ps_arr
    cdef cnp.uint16_t[::1] xs = xs_arr
    cdef cnp.uint16_t[::1] ys = ys_arr
    cdef cnp.uint64_t[::1] ts = ts_arr
    cdef cnp.int8_t[::1] ps = ps_arr
    cdef Py_ssize_t i = 0
    cdef double s, frac, step
    cdef double dtd = <double>dt_us
    for y in range(h):
        for x in range(w):
            d = i_now[y, x] - ref[y, x]
            n = <long long>floor(fabs(d) / contrast)
            if n <= 0:
                continue
            s = 1.0 if d > 0 else -1.0
            for k in range(1, n + 1):
                frac = (ref[y, x] + s * k * contrast - i_prev[y, x]) \
                    / (i_now[y, x] - i_prev[y, x])
                if frac < 0.0:
                    frac = 0.0
                elif frac > 1.0:
                    frac = 1.0
                step = ceil(frac * dtd)
                if step < 1.0:
                    step = 1.0
                xs[i] = <cnp.uint16_t>x
                ys[i] = <cnp.uint16_t>y
                ts[i] = t_prev_us + <cnp.uint64_t>step
                ps[i] = <cnp.int8_t>s
                i += 1
            ref[y, x] += s * n * contrast
    return xs_arr, ys_arr, ts_arr, ps_arr
