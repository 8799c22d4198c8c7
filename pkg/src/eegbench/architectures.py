"""The four benchmark decoder architectures.

Each builder takes (n_channels, n_samples, n_classes, seed) and returns a
NetworkGraph over (1, n_channels, n_samples) trial tensors. The identifiers
in ARCHITECTURES are stable: configs and results packages refer to them.

Inputs too short for a pooling chain raise GraphError naming the smallest
admissible trial length, found by scanning the closed-form shape recurrence.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError
from .tensornn.layers import (
    Activation, AvgPool2D, BatchNorm, Conv2D, Dense, DepthwiseConv2D, Dropout,
    MapsToPlane, MaxPool2D, SeparableConv2D,
)
from .tensornn.network import NetworkGraph


def _check_geometry(name, n_channels, n_samples, n_classes):
    if n_channels < 1:
        raise GraphError(f"{name}: need at least one channel, got {n_channels}")
    if n_classes < 2:
        raise GraphError(f"{name}: need at least two classes, got {n_classes}")
    if n_samples < 1:
        raise GraphError(f"{name}: need a positive trial length, got {n_samples}")


def _require_time(name, chain, n_samples, limit=100_000):
    """Validate the time axis against a closed-form chain; report the minimum."""
    if chain(n_samples) is not None:
        return
    for t in range(n_samples + 1, limit + 1):
        if chain(t) is not None:
            raise GraphError(
                f"{name}: trial length {n_samples} is too short for the pooling "
                f"chain; the smallest admissible length is {t}"
            )
    raise GraphError(f"{name}: trial length {n_samples} is too short")


def _deep4_chain(t):
    for _ in range(4):
        t -= 9
        if t < 3:
            return None
        t = (t - 3) // 3 + 1
    return t


def _shallow_chain(t):
    t -= 24
    if t < 75:
        return None
    return (t - 75) // 15 + 1


def _eegnet_v1_chain(t):
    # at least one full (2,32) kernel span on the time axis
    if t < 32:
        return None
    t = (t - 4) // 4 + 1
    if t < 4:
        return None
    return (t - 4) // 4 + 1


def _eegnet_v2_chain(t):
    # at least one full (1,64) kernel span on the time axis
    if t < 64:
        return None
    t = (t - 4) // 4 + 1
    if t < 8:
        return None
    return (t - 8) // 8 + 1


def _finish(name, layers, n_channels, n_samples, n_classes, rng, dtype):
    """Append the dense classifier and softmax, then assemble the graph."""
    shape = (1, n_channels, n_samples)
    for i, layer in enumerate(layers):
        try:
            shape = layer.output_shape(shape)
        except ValueError as exc:
            raise GraphError(f"{name}: layer {i} ({layer.kind}): {exc}") from exc
    flat = int(np.prod(shape))
    layers.append(Dense(flat, n_classes, rng=rng, dtype=dtype))
    layers.append(Activation("softmax"))
    return NetworkGraph(layers, (1, n_channels, n_samples), n_classes, dtype=dtype)


def build_deep4(n_channels, n_samples, n_classes, seed, dtype=np.float32):
    """Four conv-pool blocks: split temporal/spatial stem, then three deeper."""
    _check_geometry("deep4", n_channels, n_samples, n_classes)
    _require_time("deep4", _deep4_chain, n_samples)
    rng = np.random.default_rng(seed)
    layers = [
        Conv2D(1, 25, (1, 10), rng=rng, dtype=dtype),
        Conv2D(25, 25, (n_channels, 1), rng=rng, dtype=dtype),
        BatchNorm(25, dtype=dtype),
        Activation("elu"),
        MaxPool2D((1, 3)),
    ]
    for maps_in, maps_out in ((25, 50), (50, 100), (100, 200)):
        layers += [
            Dropout(0.5),
            Conv2D(maps_in, maps_out, (1, 10), rng=rng, dtype=dtype),
            BatchNorm(maps_out, dtype=dtype),
            Activation("elu"),
            MaxPool2D((1, 3)),
        ]
    return _finish("deep4", layers, n_channels, n_samples, n_classes, rng, dtype)


def build_shallow(n_channels, n_samples, n_classes, seed, dtype=np.float32):
    """Temporal and spatial convs, squaring, overlapping mean pool, log."""
    _check_geometry("shallow", n_channels, n_samples, n_classes)
    _require_time("shallow", _shallow_chain, n_samples)
    rng = np.random.default_rng(seed)
    layers = [
        Conv2D(1, 40, (1, 25), rng=rng, dtype=dtype),
        Conv2D(40, 40, (n_channels, 1), rng=rng, dtype=dtype),
        BatchNorm(40, dtype=dtype),
        Activation("square"),
        AvgPool2D((1, 75), stride=(1, 15)),
        Activation("log"),
        Dropout(0.5),
    ]
    return _finish("shallow", layers, n_channels, n_samples, n_classes, rng, dtype)


def build_eegnet_v1(n_channels, n_samples, n_classes, seed, dtype=np.float32):
    """Spatial stem, plane transpose, two padded conv blocks with 2-D pooling."""
    _check_geometry("eegnet_v1", n_channels, n_samples, n_classes)
    if n_channels < 2:
        raise GraphError(f"eegnet_v1: needs at least 2 channels, got {n_channels}")
    _require_time("eegnet_v1", _eegnet_v1_chain, n_samples)
    rng = np.random.default_rng(seed)
    layers = [
        Conv2D(1, 16, (n_channels, 1), rng=rng, dtype=dtype),
        BatchNorm(16, dtype=dtype),
        Activation("elu"),
        MapsToPlane(),
        Dropout(0.25),
        Conv2D(1, 4, (2, 32), padding="same", rng=rng, dtype=dtype),
        BatchNorm(4, dtype=dtype),
        Activation("elu"),
        MaxPool2D((2, 4)),
        Dropout(0.25),
        Conv2D(4, 4, (8, 4), padding="same", rng=rng, dtype=dtype),
        BatchNorm(4, dtype=dtype),
        Activation("elu"),
        MaxPool2D((2, 4)),
        Dropout(0.25),
    ]
    return _finish("eegnet_v1", layers, n_channels, n_samples, n_classes, rng, dtype)


def build_eegnet_v2(n_channels, n_samples, n_classes, seed, dtype=np.float32):
    """Temporal conv, depthwise spatial filter, separable conv, two mean pools."""
    _check_geometry("eegnet_v2", n_channels, n_samples, n_classes)
    _require_time("eegnet_v2", _eegnet_v2_chain, n_samples)
    rng = np.random.default_rng(seed)
    layers = [
        Conv2D(1, 8, (1, 64), padding="same", rng=rng, dtype=dtype),
        BatchNorm(8, dtype=dtype),
        DepthwiseConv2D(8, 2, (n_channels, 1), rng=rng, dtype=dtype),
        BatchNorm(16, dtype=dtype),
        Activation("elu"),
        AvgPool2D((1, 4)),
        Dropout(0.25),
        SeparableConv2D(16, 16, (1, 16), rng=rng, dtype=dtype),
        BatchNorm(16, dtype=dtype),
        Activation("elu"),
        AvgPool2D((1, 8)),
        Dropout(0.25),
    ]
    return _finish("eegnet_v2", layers, n_channels, n_samples, n_classes, rng, dtype)


ARCHITECTURES = {
    "deep4": build_deep4,
    "shallow": build_shallow,
    "eegnet_v1": build_eegnet_v1,
    "eegnet_v2": build_eegnet_v2,
}


def build(architecture: str, n_channels: int, n_samples: int, n_classes: int,
          seed: int, dtype=np.float32) -> NetworkGraph:
    """Build a registered architecture by identifier."""
    try:
        builder = ARCHITECTURES[architecture]
    except KeyError:
        raise GraphError(
            f"unknown architecture {architecture!r}; "
            f"expected one of {sorted(ARCHITECTURES)}"
        ) from None
    return builder(n_channels, n_samples, n_classes, seed, dtype=dtype)
