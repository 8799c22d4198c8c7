"""Layer zoo for sequential conv nets on (N, F, H, W) tensors.

The H axis carries electrodes and the W axis carries time; raw input enters
as (N, 1, C, T). Every layer follows the same protocol: `forward(x, train,
rng)` caches whatever `backward(gy)` needs, `backward` fills `grads` with
fresh arrays and returns the gradient wrt the input. Parameters live in
`params` under the names listed in `param_names`; persistent buffers live in
`state` under `state_names`. Serialization depends on those orders being
stable.

`output_shape` runs the shape algebra on a (maps, h, w) tuple without
touching any data, so graphs can be validated before anything is allocated.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from ._kernels_py import _window_view

ELU_ALPHA = 1.0
LOG_EPS = 1e-6
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _same_pads(k: int) -> tuple[int, int]:
    # stride-1 same padding: total k-1, extra sample goes after
    total = k - 1
    return total // 2, total - total // 2


def _check_4d(x: np.ndarray, kind: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{kind} expects a 4-D (n, maps, h, w) input, got {x.shape}")


class Layer:
    """Protocol base; concrete layers override the four core methods."""

    kind = "base"
    param_names: tuple[str, ...] = ()
    state_names: tuple[str, ...] = ()

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError

    def output_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def param_count(self) -> int:
        return int(sum(self.params[k].size for k in self.param_names))


class Conv2D(Layer):
    """Cross-correlation with per-filter bias; valid or stride-1 same padding."""

    kind = "conv2d"
    param_names = ("w", "b")

    def __init__(self, in_maps, filters, kernel, stride=(1, 1), padding="valid",
                 rng=None, dtype=np.float32):
        super().__init__()
        kernel = (int(kernel[0]), int(kernel[1]))
        stride = (int(stride[0]), int(stride[1]))
        if in_maps < 1 or filters < 1:
            raise ValueError("conv2d needs at least one input map and one filter")
        if min(kernel) < 1 or min(stride) < 1:
            raise ValueError(f"conv2d kernel {kernel} and stride {stride} must be positive")
        if padding not in ("valid", "same"):
            raise ValueError(f"conv2d padding must be 'valid' or 'same', got {padding!r}")
        if padding == "same" and stride != (1, 1):
            raise ValueError("same padding is only defined for stride (1, 1)")
        self.in_maps = int(in_maps)
        self.filters = int(filters)
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = in_maps * kernel[0] * kernel[1]
        self.params["w"] = _he_uniform(rng, (filters, in_maps) + kernel, fan_in, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def _pads(self):
        if self.padding == "same":
            return _same_pads(self.kernel[0]), _same_pads(self.kernel[1])
        return (0, 0), (0, 0)

    def output_shape(self, in_shape):
        f, h, w = in_shape
        if f != self.in_maps:
            raise ValueError(f"conv2d expects {self.in_maps} input maps, got {f}")
        (pt, pb), (pl, pr) = self._pads()
        kh, kw = self.kernel
        sh, sw = self.stride
        h_eff, w_eff = h + pt + pb, w + pl + pr
        if h_eff < kh or w_eff < kw:
            raise ValueError(
                f"conv2d kernel {self.kernel} does not fit input ({h}, {w}) "
                f"with padding {self.padding!r}"
            )
        return (self.filters, (h_eff - kh) // sh + 1, (w_eff - kw) // sw + 1)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        (pt, pb), (pl, pr) = self._pads()
        xp = x
        if self.padding == "same":
            xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        self._cache = (xp, x.shape)
        return kernels.conv2d_forward(xp, self.params["w"], self.params["b"], self.stride)

    def backward(self, gy):
        xp, x_shape = self._cache
        gy = np.ascontiguousarray(gy)
        self.grads["w"] = kernels.conv2d_backward_weights(xp, gy, self.kernel, self.stride)
        self.grads["b"] = gy.sum(axis=(0, 2, 3))
        gxp = kernels.conv2d_backward_input(gy, self.params["w"], xp.shape, self.stride)
        if self.padding == "same":
            (pt, _), (pl, _) = self._pads()
            gxp = np.ascontiguousarray(
                gxp[:, :, pt : pt + x_shape[2], pl : pl + x_shape[3]]
            )
        return gxp

    def config(self):
        return {
            "kind": self.kind,
            "in_maps": self.in_maps,
            "filters": self.filters,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "padding": self.padding,
        }


class DepthwiseConv2D(Layer):
    """Per-map cross-correlation with a depth multiplier and no bias."""

    kind = "depthwise_conv2d"
    param_names = ("w",)

    def __init__(self, in_maps, multiplier, kernel, stride=(1, 1), padding="valid",
                 rng=None, dtype=np.float32):
        super().__init__()
        kernel = (int(kernel[0]), int(kernel[1]))
        stride = (int(stride[0]), int(stride[1]))
        if in_maps < 1 or multiplier < 1:
            raise ValueError("depthwise_conv2d needs in_maps >= 1 and multiplier >= 1")
        if min(kernel) < 1 or min(stride) < 1:
            raise ValueError(
                f"depthwise_conv2d kernel {kernel} and stride {stride} must be positive"
            )
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        if padding == "same" and stride != (1, 1):
            raise ValueError("same padding is only defined for stride (1, 1)")
        self.in_maps = int(in_maps)
        self.multiplier = int(multiplier)
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = kernel[0] * kernel[1]
        self.params["w"] = _he_uniform(
            rng, (in_maps, multiplier) + kernel, fan_in, dtype
        )

    def _pads(self):
        if self.padding == "same":
            return _same_pads(self.kernel[0]), _same_pads(self.kernel[1])
        return (0, 0), (0, 0)

    def output_shape(self, in_shape):
        f, h, w = in_shape
        if f != self.in_maps:
            raise ValueError(f"depthwise_conv2d expects {self.in_maps} input maps, got {f}")
        (pt, pb), (pl, pr) = self._pads()
        kh, kw = self.kernel
        sh, sw = self.stride
        h_eff, w_eff = h + pt + pb, w + pl + pr
        if h_eff < kh or w_eff < kw:
            raise ValueError(
                f"depthwise kernel {self.kernel} does not fit input ({h}, {w})"
            )
        return (f * self.multiplier, (h_eff - kh) // sh + 1, (w_eff - kw) // sw + 1)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        (pt, pb), (pl, pr) = self._pads()
        xp = x
        if self.padding == "same":
            xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        self._cache = (xp, x.shape)
        return kernels.depthwise_forward(xp, self.params["w"], self.stride)

    def backward(self, gy):
        xp, x_shape = self._cache
        gy = np.ascontiguousarray(gy)
        self.grads["w"] = kernels.depthwise_backward_weights(
            xp, gy, self.kernel, self.multiplier, self.stride
        )
        gxp = kernels.depthwise_backward_input(gy, self.params["w"], xp.shape, self.stride)
        if self.padding == "same":
            (pt, _), (pl, _) = self._pads()
            gxp = np.ascontiguousarray(
                gxp[:, :, pt : pt + x_shape[2], pl : pl + x_shape[3]]
            )
        return gxp

    def config(self):
        return {
            "kind": self.kind,
            "in_maps": self.in_maps,
            "multiplier": self.multiplier,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "padding": self.padding,
        }


class SeparableConv2D(Layer):
    """Depthwise stage (multiplier 1, same padding) into a biased 1x1 pointwise."""

    kind = "separable_conv2d"
    param_names = ("dw", "pw", "pb")

    def __init__(self, in_maps, filters, kernel, rng=None, dtype=np.float32):
        super().__init__()
        kernel = (int(kernel[0]), int(kernel[1]))
        if in_maps < 1 or filters < 1:
            raise ValueError("separable_conv2d needs in_maps >= 1 and filters >= 1")
        if min(kernel) < 1:
            raise ValueError(f"separable_conv2d kernel {kernel} must be positive")
        self.in_maps = int(in_maps)
        self.filters = int(filters)
        self.kernel = kernel
        self.params["dw"] = _he_uniform(
            rng, (in_maps, 1) + kernel, kernel[0] * kernel[1], dtype
        )
        self.params["pw"] = _he_uniform(rng, (filters, in_maps, 1, 1), in_maps, dtype)
        self.params["pb"] = np.zeros(filters, dtype=dtype)

    def output_shape(self, in_shape):
        f, h, w = in_shape
        if f != self.in_maps:
            raise ValueError(f"separable_conv2d expects {self.in_maps} input maps, got {f}")
        return (self.filters, h, w)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        (pt, pb), (pl, pr) = _same_pads(self.kernel[0]), _same_pads(self.kernel[1])
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        mid = kernels.depthwise_forward(xp, self.params["dw"], (1, 1))
        self._cache = (xp, mid, x.shape)
        return kernels.conv2d_forward(mid, self.params["pw"], self.params["pb"], (1, 1))

    def backward(self, gy):
        xp, mid, x_shape = self._cache
        gy = np.ascontiguousarray(gy)
        self.grads["pw"] = kernels.conv2d_backward_weights(mid, gy, (1, 1), (1, 1))
        self.grads["pb"] = gy.sum(axis=(0, 2, 3))
        gmid = kernels.conv2d_backward_input(gy, self.params["pw"], mid.shape, (1, 1))
        self.grads["dw"] = kernels.depthwise_backward_weights(
            xp, gmid, self.kernel, 1, (1, 1)
        )
        gxp = kernels.depthwise_backward_input(gmid, self.params["dw"], xp.shape, (1, 1))
        (pt, _), (pl, _) = _same_pads(self.kernel[0]), _same_pads(self.kernel[1])
        return np.ascontiguousarray(
            gxp[:, :, pt : pt + x_shape[2], pl : pl + x_shape[3]]
        )

    def config(self):
        return {
            "kind": self.kind,
            "in_maps": self.in_maps,
            "filters": self.filters,
            "kernel": list(self.kernel),
        }


class BatchNorm(Layer):
    """Per-map batch normalization over (n, h, w) with running eval statistics.

    Batch statistics are accumulated in float64; the biased variance is used
    both for normalization and for the running update. Running buffers are
    kept in the layer dtype so a save/load round trip is exact.
    """

    kind = "batchnorm"
    param_names = ("gamma", "beta")
    state_names = ("running_mean", "running_var")

    def __init__(self, maps, eps=BN_EPS, momentum=BN_MOMENTUM, dtype=np.float32):
        super().__init__()
        if maps < 1:
            raise ValueError("batchnorm needs at least one map")
        if not 0.0 < momentum <= 1.0:
            raise ValueError(f"batchnorm momentum must be in (0, 1], got {momentum}")
        if eps <= 0.0:
            raise ValueError(f"batchnorm eps must be positive, got {eps}")
        self.maps = int(maps)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.params["gamma"] = np.ones(maps, dtype=dtype)
        self.params["beta"] = np.zeros(maps, dtype=dtype)
        self.state["running_mean"] = np.zeros(maps, dtype=dtype)
        self.state["running_var"] = np.ones(maps, dtype=dtype)

    def output_shape(self, in_shape):
        f, h, w = in_shape
        if f != self.maps:
            raise ValueError(f"batchnorm expects {self.maps} maps, got {f}")
        return in_shape

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        dtype = x.dtype
        gamma = self.params["gamma"].reshape(1, -1, 1, 1)
        beta = self.params["beta"].reshape(1, -1, 1, 1)
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm train mode needs a batch of at least 2")
            mean64 = x.mean(axis=(0, 2, 3), dtype=np.float64)
            mean = mean64.astype(dtype).reshape(1, -1, 1, 1)
            xc = x - mean
            m = x.shape[0] * x.shape[2] * x.shape[3]
            var64 = np.einsum(
                "nfhw,nfhw->f", xc, xc, dtype=np.float64, optimize=True
            ) / m
            inv = (1.0 / np.sqrt(var64 + self.eps)).astype(dtype).reshape(1, -1, 1, 1)
            xhat = xc * inv
            mom = self.momentum
            self.state["running_mean"] = (
                (1.0 - mom) * self.state["running_mean"].astype(np.float64) + mom * mean64
            ).astype(dtype)
            self.state["running_var"] = (
                (1.0 - mom) * self.state["running_var"].astype(np.float64) + mom * var64
            ).astype(dtype)
            self._cache = ("train", xhat, inv, m)
        else:
            rm = self.state["running_mean"].astype(np.float64)
            rv = self.state["running_var"].astype(np.float64)
            inv = (1.0 / np.sqrt(rv + self.eps)).astype(dtype).reshape(1, -1, 1, 1)
            xhat = (x - rm.astype(dtype).reshape(1, -1, 1, 1)) * inv
            self._cache = ("eval", xhat, inv, None)
        return gamma * xhat + beta

    def backward(self, gy):
        mode, xhat, inv, m = self._cache
        dtype = gy.dtype
        gamma = self.params["gamma"].reshape(1, -1, 1, 1)
        self.grads["gamma"] = np.einsum(
            "nfhw,nfhw->f", gy, xhat, dtype=np.float64, optimize=True
        ).astype(dtype)
        self.grads["beta"] = gy.sum(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
        if mode == "eval":
            return np.ascontiguousarray(gy * gamma * inv)
        dxhat = gy * gamma
        s1 = dxhat.sum(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
        s2 = np.einsum(
            "nfhw,nfhw->f", dxhat, xhat, dtype=np.float64, optimize=True
        ).astype(dtype)
        gx = (inv / m) * (
            m * dxhat - s1.reshape(1, -1, 1, 1) - xhat * s2.reshape(1, -1, 1, 1)
        )
        return np.ascontiguousarray(gx)

    def config(self):
        return {
            "kind": self.kind,
            "maps": self.maps,
            "eps": self.eps,
            "momentum": self.momentum,
        }


class Activation(Layer):
    """Elementwise nonlinearity: elu, square, or floored log; or row softmax."""

    kind = "activation"
    KINDS = ("elu", "square", "log", "softmax")

    def __init__(self, fn: str):
        super().__init__()
        if fn not in self.KINDS:
            raise ValueError(f"unknown activation {fn!r}; expected one of {self.KINDS}")
        self.fn = fn

    def output_shape(self, in_shape):
        if self.fn == "softmax" and len(in_shape) != 1:
            raise ValueError(f"softmax expects a flat (classes,) input, got {in_shape}")
        return in_shape

    def forward(self, x, train=False, rng=None):
        if self.fn == "elu":
            mask = x > 0
            y = np.where(mask, x, ELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
            y = y.astype(x.dtype, copy=False)
            self._cache = (mask, y)
            return y
        if self.fn == "square":
            self._cache = x
            return x * x
        if self.fn == "log":
            self._cache = x
            return np.log(np.maximum(x, LOG_EPS))
        # softmax over the class axis of (n, classes) rows
        if x.ndim != 2:
            raise ValueError(f"softmax expects a 2-D (n, classes) input, got {x.shape}")
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=1, keepdims=True)
        self._cache = y
        return y

    def backward(self, gy):
        if self.fn == "elu":
            mask, y = self._cache
            return np.ascontiguousarray(gy * np.where(mask, 1.0, y + ELU_ALPHA).astype(gy.dtype))
        if self.fn == "square":
            x = self._cache
            return np.ascontiguousarray(2.0 * x * gy)
        if self.fn == "log":
            x = self._cache
            mask = x > LOG_EPS
            safe = np.where(mask, x, 1.0)
            return np.ascontiguousarray(np.where(mask, gy / safe, 0.0).astype(gy.dtype))
        y = self._cache
        dot = (gy * y).sum(axis=1, keepdims=True)
        return np.ascontiguousarray(y * (gy - dot))

    def config(self):
        return {"kind": self.kind, "fn": self.fn}


class MaxPool2D(Layer):
    """Max pooling; ties resolve to the first position in row-major window order."""

    kind = "maxpool"

    def __init__(self, pool, stride=None):
        super().__init__()
        pool = (int(pool[0]), int(pool[1]))
        stride = pool if stride is None else (int(stride[0]), int(stride[1]))
        if min(pool) < 1 or min(stride) < 1:
            raise ValueError(f"pool {pool} and stride {stride} must be positive")
        self.pool = pool
        self.stride = stride

    def output_shape(self, in_shape):
        f, h, w = in_shape
        ph, pw = self.pool
        sh, sw = self.stride
        if h < ph or w < pw:
            raise ValueError(f"pool window {self.pool} exceeds input ({h}, {w})")
        return (f, (h - ph) // sh + 1, (w - pw) // sw + 1)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        ph, pw = self.pool
        sh, sw = self.stride
        win = _window_view(x, ph, pw, sh, sw)
        flat = np.ascontiguousarray(win).reshape(win.shape[:4] + (ph * pw,))
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape, x.dtype)
        return np.ascontiguousarray(y)

    def backward(self, gy):
        idx, x_shape, dtype = self._cache
        ph, pw = self.pool
        sh, sw = self.stride
        n, c, ho, wo = gy.shape
        gx = np.zeros(x_shape, dtype=dtype)
        if (sh, sw) == (ph, pw):
            # non-overlapping tiling: scatter via a one-hot expansion
            onehot = idx[..., None] == np.arange(ph * pw).reshape(1, 1, 1, 1, -1)
            g = (gy[..., None] * onehot).reshape(n, c, ho, wo, ph, pw)
            g = g.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * ph, wo * pw)
            gx[:, :, : ho * ph, : wo * pw] = g
            return gx
        oh = np.arange(ho).reshape(1, 1, ho, 1)
        ow = np.arange(wo).reshape(1, 1, 1, wo)
        hh = oh * sh + idx // pw
        ww = ow * sw + idx % pw
        nn = np.arange(n).reshape(n, 1, 1, 1)
        cc = np.arange(c).reshape(1, c, 1, 1)
        nn, cc, hh, ww = np.broadcast_arrays(nn, cc, hh, ww)
        np.add.at(gx, (nn, cc, hh, ww), gy)
        return gx

    def config(self):
        return {"kind": self.kind, "pool": list(self.pool), "stride": list(self.stride)}


class AvgPool2D(Layer):
    """Mean pooling; stride may be smaller than the window (overlapping)."""

    kind = "avgpool"

    def __init__(self, pool, stride=None):
        super().__init__()
        pool = (int(pool[0]), int(pool[1]))
        stride = pool if stride is None else (int(stride[0]), int(stride[1]))
        if min(pool) < 1 or min(stride) < 1:
            raise ValueError(f"pool {pool} and stride {stride} must be positive")
        self.pool = pool
        self.stride = stride

    def output_shape(self, in_shape):
        f, h, w = in_shape
        ph, pw = self.pool
        sh, sw = self.stride
        if h < ph or w < pw:
            raise ValueError(f"pool window {self.pool} exceeds input ({h}, {w})")
        return (f, (h - ph) // sh + 1, (w - pw) // sw + 1)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        ph, pw = self.pool
        sh, sw = self.stride
        win = _window_view(x, ph, pw, sh, sw)
        y = win.mean(axis=(-2, -1), dtype=x.dtype)
        self._cache = (x.shape, x.dtype)
        return np.ascontiguousarray(y)

    def backward(self, gy):
        x_shape, dtype = self._cache
        ph, pw = self.pool
        sh, sw = self.stride
        ho, wo = gy.shape[2], gy.shape[3]
        gx = np.zeros(x_shape, dtype=dtype)
        scaled = gy * dtype.type(1.0 / (ph * pw))
        for i in range(ph):
            for j in range(pw):
                gx[:, :, i : i + sh * (ho - 1) + 1 : sh,
                   j : j + sw * (wo - 1) + 1 : sw] += scaled
        return gx

    def config(self):
        return {"kind": self.kind, "pool": list(self.pool), "stride": list(self.stride)}


class Dropout(Layer):
    """Inverted dropout: active only in train mode, identity in eval mode."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs a random generator")
        keep = 1.0 - self.rate
        mask = rng.random(x.shape) < keep
        scale = x.dtype.type(1.0 / keep)
        self._cache = (mask, scale)
        return x * mask * scale

    def backward(self, gy):
        if self._cache is None:
            return gy
        mask, scale = self._cache
        return np.ascontiguousarray(gy * mask * scale)

    def config(self):
        return {"kind": self.kind, "rate": self.rate}


class Dense(Layer):
    """Affine map; 4-D inputs are flattened to (n, maps*h*w) in C order."""

    kind = "dense"
    param_names = ("w", "b")

    def __init__(self, in_features, units, rng=None, dtype=np.float32):
        super().__init__()
        if in_features < 1 or units < 1:
            raise ValueError("dense needs in_features >= 1 and units >= 1")
        self.in_features = int(in_features)
        self.units = int(units)
        self.params["w"] = _he_uniform(rng, (in_features, units), in_features, dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def output_shape(self, in_shape):
        flat = int(np.prod(in_shape))
        if flat != self.in_features:
            raise ValueError(
                f"dense expects {self.in_features} input features, got {flat} "
                f"from shape {in_shape}"
            )
        return (self.units,)

    def forward(self, x, train=False, rng=None):
        if x.ndim not in (2, 4):
            raise ValueError(f"dense expects a 2-D or 4-D input, got {x.shape}")
        flat = np.ascontiguousarray(x).reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_features:
            raise ValueError(
                f"dense expects {self.in_features} input features, got {flat.shape[1]}"
            )
        self._cache = (flat, x.shape)
        return flat @ self.params["w"] + self.params["b"]

    def backward(self, gy):
        flat, x_shape = self._cache
        gy = np.ascontiguousarray(gy)
        self.grads["w"] = flat.T @ gy
        self.grads["b"] = gy.sum(axis=0)
        gx = gy @ self.params["w"].T
        return np.ascontiguousarray(gx.reshape(x_shape))

    def config(self):
        return {"kind": self.kind, "in_features": self.in_features, "units": self.units}


class MapsToPlane(Layer):
    """Reinterpret (n, f, 1, t) maps as a single (n, 1, f, t) plane."""

    kind = "maps_to_plane"

    def output_shape(self, in_shape):
        f, h, w = in_shape
        if h != 1:
            raise ValueError(f"maps_to_plane needs a collapsed h axis, got h={h}")
        return (1, f, w)

    def forward(self, x, train=False, rng=None):
        _check_4d(x, self.kind)
        self.output_shape(x.shape[1:])
        self._cache = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3))

    def backward(self, gy):
        return np.ascontiguousarray(gy.transpose(0, 2, 1, 3))

    def config(self):
        return {"kind": self.kind}


_LAYER_CLASSES = {
    cls.kind: cls
    for cls in (
        Conv2D, DepthwiseConv2D, SeparableConv2D, BatchNorm, Activation,
        MaxPool2D, AvgPool2D, Dropout, Dense, MapsToPlane,
    )
}


def layer_from_config(cfg: dict, dtype=np.float32) -> Layer:
    """Rebuild a layer from its config dict with zero-initialized parameters."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in _LAYER_CLASSES:
        raise ValueError(f"unknown layer kind {kind!r}")
    cls = _LAYER_CLASSES[kind]
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    if cls.param_names:
        kwargs["dtype"] = dtype
    return cls(**kwargs)
