# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Convolution kernels on contiguous (N, F, H, W) arrays, compiled edition.

Same contracts as the numpy edition. Loops keep the stride-1 time axis
innermost so the C compiler can vectorize; everything runs on one core.
"""

import numpy as np

ctypedef fused real:
    float
    double

BACKEND = "compiled"


cdef void _conv_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b,
                    Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t nn = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nf = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = y.shape[2], wo = y.shape[3]
    cdef Py_ssize_t n, c, f, i, j, p, q
    cdef real ws
    cdef const real* xrow
    cdef real* yrow
    for n in range(nn):
        for f in range(nf):
            for p in range(ho):
                yrow = &y[n, f, p, 0]
                for q in range(wo):
                    yrow[q] = b[f]
        for c in range(nc):
            for f in range(nf):
                for i in range(kh):
                    for j in range(kw):
                        ws = w[f, c, i, j]
                        for p in range(ho):
                            xrow = &x[n, c, p * sh + i, j]
                            yrow = &y[n, f, p, 0]
                            if sw == 1:
                                for q in range(wo):
                                    yrow[q] += ws * xrow[q]
                            else:
                                for q in range(wo):
                                    yrow[q] += ws * xrow[q * sw]


cdef void _conv_bwd_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                          Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t nn = gy.shape[0], nf = gy.shape[1]
    cdef Py_ssize_t nc = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t n, c, f, i, j, p, q
    cdef real ws
    cdef const real* grow
    cdef real* xrow
    for n in range(nn):
        for c in range(nc):
            for f in range(nf):
                for i in range(kh):
                    for j in range(kw):
                        ws = w[f, c, i, j]
                        for p in range(ho):
                            grow = &gy[n, f, p, 0]
                            xrow = &gx[n, c, p * sh + i, j]
                            if sw == 1:
                                for q in range(wo):
                                    xrow[q] += ws * grow[q]
                            else:
                                for q in range(wo):
                                    xrow[q * sw] += ws * grow[q]


cdef void _conv_bwd_weights(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                            Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] gw) noexcept nogil:
    cdef Py_ssize_t nn = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nf = gw.shape[0], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t n, c, f, i, j, p, q
    cdef real acc
    cdef const real* xrow
    cdef const real* grow
    for c in range(nc):
        for f in range(nf):
            for i in range(kh):
                for j in range(kw):
                    acc = 0
                    for n in range(nn):
                        for p in range(ho):
                            xrow = &x[n, c, p * sh + i, j]
                            grow = &gy[n, f, p, 0]
                            if sw == 1:
                                for q in range(wo):
                                    acc += xrow[q] * grow[q]
                            else:
                                for q in range(wo):
                                    acc += xrow[q * sw] * grow[q]
                    gw[f, c, i, j] = acc


cdef void _dw_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                  Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t nn = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nm = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = y.shape[2], wo = y.shape[3]
    cdef Py_ssize_t n, c, m, i, j, p, q, f
    cdef real ws
    cdef const real* xrow
    cdef real* yrow
    for n in range(nn):
        for c in range(nc):
            for m in range(nm):
                f = c * nm + m
                for p in range(ho):
                    yrow = &y[n, f, p, 0]
                    for q in range(wo):
                        yrow[q] = 0
                for i in range(kh):
                    for j in range(kw):
                        ws = w[c, m, i, j]
                        for p in range(ho):
                            xrow = &x[n, c, p * sh + i, j]
                            yrow = &y[n, f, p, 0]
                            if sw == 1:
                                for q in range(wo):
                                    yrow[q] += ws * xrow[q]
                            else:
                                for q in range(wo):
                                    yrow[q] += ws * xrow[q * sw]


cdef void _dw_bwd_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                        Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t nn = gy.shape[0]
    cdef Py_ssize_t nc = w.shape[0], nm = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t n, c, m, i, j, p, q, f
    cdef real ws
    cdef const real* grow
    cdef real* xrow
    for n in range(nn):
        for c in range(nc):
            for m in range(nm):
                f = c * nm + m
                for i in range(kh):
                    for j in range(kw):
                        ws = w[c, m, i, j]
                        for p in range(ho):
                            grow = &gy[n, f, p, 0]
                            xrow = &gx[n, c, p * sh + i, j]
                            if sw == 1:
                                for q in range(wo):
                                    xrow[q] += ws * grow[q]
                            else:
                                for q in range(wo):
                                    xrow[q * sw] += ws * grow[q]


cdef void _dw_bwd_weights(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                          Py_ssize_t sh, Py_ssize_t sw, real[:, :, :, ::1] gw) noexcept nogil:
    cdef Py_ssize_t nn = x.shape[0]
    cdef Py_ssize_t nc = gw.shape[0], nm = gw.shape[1], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t n, c, m, i, j, p, q, f
    cdef real acc
    cdef const real* xrow
    cdef const real* grow
    for c in range(nc):
        for m in range(nm):
            f = c * nm + m
            for i in range(kh):
                for j in range(kw):
                    acc = 0
                    for n in range(nn):
                        for p in range(ho):
                            xrow = &x[n, c, p * sh + i, j]
                            grow = &gy[n, f, p, 0]
                            if sw == 1:
                                for q in range(wo):
                                    acc += xrow[q] * grow[q]
                            else:
                                for q in range(wo):
                                    acc += xrow[q * sw] * grow[q]
                    gw[c, m, i, j] = acc


cdef inline int _is_f32(arr) except -1:
    if arr.dtype == np.float32:
        return 1
    if arr.dtype == np.float64:
        return 0
    raise TypeError(f"unsupported kernel dtype {arr.dtype}; expected float32 or float64")


def _check_dtypes(*arrays):
    """All operands must share one float32/float64 dtype; no silent upcasts."""
    dtypes = {a.dtype for a in arrays if a is not None}
    if len(dtypes) > 1 or not dtypes <= {np.dtype(np.float32), np.dtype(np.float64)}:
        raise TypeError(
            f"kernel operands must share one float32/float64 dtype, got "
            f"{sorted(str(d) for d in dtypes)}"
        )


def conv2d_forward(x, w, b, stride):
    """Cross-correlate x (n,c,h,w) with w (f,c,kh,kw); add per-filter bias b."""
    _check_dtypes(x, w, b)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    ho = (x.shape[2] - w.shape[2]) // sh + 1
    wo = (x.shape[3] - w.shape[3]) // sw + 1
    y = np.empty((x.shape[0], w.shape[0], ho, wo), dtype=x.dtype)
    bb = b if b is not None else np.zeros(w.shape[0], dtype=x.dtype)
    if _is_f32(x):
        _conv_fwd[float](x, w, bb, sh, sw, y)
    else:
        _conv_fwd[double](x, w, bb, sh, sw, y)
    return y


def conv2d_backward_input(gy, w, x_shape, stride):
    """Gradient wrt x for conv2d_forward, zero where no window ever reached."""
    _check_dtypes(gy, w)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    gx = np.zeros(x_shape, dtype=gy.dtype)
    if _is_f32(gy):
        _conv_bwd_input[float](gy, w, sh, sw, gx)
    else:
        _conv_bwd_input[double](gy, w, sh, sw, gx)
    return gx


def conv2d_backward_weights(x, gy, kernel, stride):
    """Gradient wrt w for conv2d_forward; kernel is (kh, kw)."""
    _check_dtypes(x, gy)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    gw = np.empty((gy.shape[1], x.shape[1], kernel[0], kernel[1]), dtype=x.dtype)
    if _is_f32(x):
        _conv_bwd_weights[float](x, gy, sh, sw, gw)
    else:
        _conv_bwd_weights[double](x, gy, sh, sw, gw)
    return gw


def depthwise_forward(x, w, stride):
    """Per-map cross-correlation; w is (c, m, kh, kw), output (n, c*m, ho, wo)."""
    _check_dtypes(x, w)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    ho = (x.shape[2] - w.shape[2]) // sh + 1
    wo = (x.shape[3] - w.shape[3]) // sw + 1
    y = np.empty((x.shape[0], x.shape[1] * w.shape[1], ho, wo), dtype=x.dtype)
    if _is_f32(x):
        _dw_fwd[float](x, w, sh, sw, y)
    else:
        _dw_fwd[double](x, w, sh, sw, y)
    return y


def depthwise_backward_input(gy, w, x_shape, stride):
    """Gradient wrt x for depthwise_forward."""
    _check_dtypes(gy, w)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    gx = np.zeros(x_shape, dtype=gy.dtype)
    if _is_f32(gy):
        _dw_bwd_input[float](gy, w, sh, sw, gx)
    else:
        _dw_bwd_input[double](gy, w, sh, sw, gx)
    return gx


def depthwise_backward_weights(x, gy, kernel, multiplier, stride):
    """Gradient wrt w for depthwise_forward; kernel is (kh, kw)."""
    _check_dtypes(x, gy)
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    gw = np.empty((x.shape[1], multiplier, kernel[0], kernel[1]), dtype=x.dtype)
    if _is_f32(x):
        _dw_bwd_weights[float](x, gy, sh, sw, gw)
    else:
        _dw_bwd_weights[double](x, gy, sh, sw, gw)
    return gw
