"""Convolution kernels on contiguous (N, F, H, W) arrays, numpy edition.

All kernels compute valid-padding cross-correlations; layers do their own
zero padding. Backward-input passes reuse the forward kernel on a dilated
and padded gradient with a flipped, transposed weight tensor, the standard
transposed-convolution identity.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND = "python"


def _check_dtypes(*arrays) -> None:
    """All operands must share one float32/float64 dtype; no silent upcasts."""
    dtypes = {a.dtype for a in arrays if a is not None}
    if len(dtypes) > 1 or not dtypes <= {np.dtype(np.float32), np.dtype(np.float64)}:
        raise TypeError(
            f"kernel operands must share one float32/float64 dtype, got "
            f"{sorted(str(d) for d in dtypes)}"
        )


def _window_view(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Read-only sliding-window view (n, c, ho, wo, kh, kw) of (n, c, h, w)."""
    n, c, h, w = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    s_n, s_c, s_h, s_w = x.strides
    return as_strided(
        x,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s_n, s_c, s_h * sh, s_w * sw, s_h, s_w),
        writeable=False,
    )


def conv2d_forward(x, w, b, stride):
    """Cross-correlate x (n,c,h,w) with w (f,c,kh,kw); add per-filter bias b."""
    _check_dtypes(x, w, b)
    sh, sw = stride
    win = _window_view(x, w.shape[2], w.shape[3], sh, sw)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y


def conv2d_backward_input(gy, w, x_shape, stride):
    """Gradient wrt x for conv2d_forward, zero where no window ever reached."""
    _check_dtypes(gy, w)
    n, f, ho, wo = gy.shape
    kh, kw = w.shape[2], w.shape[3]
    sh, sw = stride
    hd = (ho - 1) * sh + 1
    wd = (wo - 1) * sw + 1
    if sh > 1 or sw > 1:
        g = np.zeros((n, f, hd, wd), dtype=gy.dtype)
        g[:, :, ::sh, ::sw] = gy
    else:
        g = gy
    gpad = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = conv2d_forward(gpad, wt, None, (1, 1))
    if gx.shape == x_shape:
        return gx
    full = np.zeros(x_shape, dtype=gy.dtype)
    full[:, :, : gx.shape[2], : gx.shape[3]] = gx
    return full


def conv2d_backward_weights(x, gy, kernel, stride):
    """Gradient wrt w for conv2d_forward; kernel is (kh, kw)."""
    _check_dtypes(x, gy)
    kh, kw = kernel
    sh, sw = stride
    win = _window_view(x, kh, kw, sh, sw)
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))
    return np.ascontiguousarray(gw)


def depthwise_forward(x, w, stride):
    """Per-map cross-correlation; w is (c, m, kh, kw), output (n, c*m, ho, wo)."""
    _check_dtypes(x, w)
    sh, sw = stride
    n, c = x.shape[0], x.shape[1]
    win = _window_view(x, w.shape[2], w.shape[3], sh, sw)
    y = np.einsum("ncpqij,cmij->ncmpq", win, w, optimize=True)
    return np.ascontiguousarray(y.reshape(n, c * w.shape[1], y.shape[3], y.shape[4]))


def depthwise_backward_input(gy, w, x_shape, stride):
    """Gradient wrt x for depthwise_forward."""
    _check_dtypes(gy, w)
    c, m, kh, kw = w.shape
    n = gy.shape[0]
    ho, wo = gy.shape[2], gy.shape[3]
    sh, sw = stride
    hd = (ho - 1) * sh + 1
    wd = (wo - 1) * sw + 1
    if sh > 1 or sw > 1:
        g = np.zeros((n, c * m, hd, wd), dtype=gy.dtype)
        g[:, :, ::sh, ::sw] = gy
    else:
        g = gy
    gpad = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    win = _window_view(gpad, kh, kw, 1, 1)
    win = win.reshape(n, c, m, win.shape[2], win.shape[3], kh, kw)
    wf = w[:, :, ::-1, ::-1]
    gx = np.einsum("ncmpqij,cmij->ncpq", win, wf, optimize=True)
    if gx.shape == x_shape:
        return np.ascontiguousarray(gx)
    full = np.zeros(x_shape, dtype=gy.dtype)
    full[:, :, : gx.shape[2], : gx.shape[3]] = gx
    return full


def depthwise_backward_weights(x, gy, kernel, multiplier, stride):
    """Gradient wrt w for depthwise_forward; kernel is (kh, kw)."""
    _check_dtypes(x, gy)
    kh, kw = kernel
    sh, sw = stride
    n, c = x.shape[0], x.shape[1]
    win = _window_view(x, kh, kw, sh, sw)
    gyr = gy.reshape(n, c, multiplier, gy.shape[2], gy.shape[3])
    gw = np.einsum("ncpqij,ncmpq->cmij", win, gyr, optimize=True)
    return np.ascontiguousarray(gw)
