"""Model persistence: a JSON sidecar plus a raw little-endian float32 blob.

`model.meta.json` holds the rebuild recipe (layer configs, input contract,
seed); `model.bin` holds every trainable parameter followed by every
persistent buffer, layer by layer, in the declared name order. A load
restores bit-identical float32 values, so eval-mode predictions round-trip
exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from ..jsonutil import read_json, write_canonical_json
from .layers import layer_from_config
from .network import NetworkGraph

MODEL_META = "model.meta.json"
MODEL_BIN = "model.bin"
FORMAT_VERSION = 1
_BIN_DTYPE = np.dtype("<f4")

_META_KEYS = {
    "format_version", "architecture", "input_shape", "n_classes",
    "dtype", "seed", "layers",
}


def _array_entries(net: NetworkGraph):
    for layer in net.layers:
        for name in layer.param_names:
            yield layer, layer.params, name
        for name in layer.state_names:
            yield layer, layer.state, name


def save_model(net: NetworkGraph, directory, architecture: str, seed: int) -> None:
    if net.dtype != np.float32:
        raise DataFormatError(
            f"only float32 networks are serializable, got {net.dtype}"
        )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture,
        "input_shape": list(net.input_shape),
        "n_classes": net.n_classes,
        "dtype": "float32",
        "seed": int(seed),
        "layers": [layer.config() for layer in net.layers],
    }
    write_canonical_json(directory / MODEL_META, meta)
    chunks = [
        np.ascontiguousarray(store[name], dtype=_BIN_DTYPE).tobytes()
        for _, store, name in _array_entries(net)
    ]
    (directory / MODEL_BIN).write_bytes(b"".join(chunks))


def load_model(directory):
    """Rebuild (net, meta) from a model directory; values restore exactly."""
    directory = Path(directory)
    meta = read_json(directory / MODEL_META)
    if not isinstance(meta, dict):
        raise DataFormatError(f"{directory / MODEL_META}: expected a JSON object")
    missing = _META_KEYS - meta.keys()
    unknown = meta.keys() - _META_KEYS
    if missing or unknown:
        raise DataFormatError(
            f"{directory / MODEL_META}: missing keys {sorted(missing)}, "
            f"unknown keys {sorted(unknown)}"
        )
    if meta["format_version"] != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported model format version {meta['format_version']!r}"
        )
    if meta["dtype"] != "float32":
        raise DataFormatError(f"unsupported model dtype {meta['dtype']!r}")
    try:
        layers = [layer_from_config(cfg, dtype=np.float32) for cfg in meta["layers"]]
        net = NetworkGraph(
            layers, tuple(meta["input_shape"]), meta["n_classes"], dtype=np.float32
        )
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"cannot rebuild model from {directory}: {exc}") from exc
    bin_path = directory / MODEL_BIN
    if not bin_path.is_file():
        raise DataFormatError(f"missing model blob: {bin_path}")
    buf = bin_path.read_bytes()
    offset = 0
    for layer, store, name in _array_entries(net):
        arr = store[name]
        nbytes = arr.size * _BIN_DTYPE.itemsize
        if offset + nbytes > len(buf):
            raise DataFormatError(
                f"model blob too short: needed {offset + nbytes} bytes for "
                f"{layer.kind}.{name}, file has {len(buf)}"
            )
        values = np.frombuffer(buf, dtype=_BIN_DTYPE, count=arr.size, offset=offset)
        store[name] = values.reshape(arr.shape).astype(np.float32)
        offset += nbytes
    if offset != len(buf):
        raise DataFormatError(
            f"model blob has {len(buf) - offset} trailing bytes beyond the "
            f"declared parameters"
        )
    return net, meta
