"""Backend selection for the convolution kernels.

The compiled extension is used when it imported cleanly, with the numpy
edition as fallback. Set EEGBENCH_KERNELS=python or =compiled to force a
choice; forcing the compiled backend when it is unavailable is an error.
Both backends expose the same functions and produce the same results up to
floating-point accumulation order.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_FORCED = os.environ.get("EEGBENCH_KERNELS", "").strip().lower()
if _FORCED == "python":
    _active = _kernels_py
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError(
            "EEGBENCH_KERNELS=compiled but the compiled extension is not importable"
        )
    _active = _compiled
elif _FORCED == "":
    _active = _compiled if _compiled is not None else _kernels_py
else:
    raise ImportError(f"unknown EEGBENCH_KERNELS value {_FORCED!r}")


def backend_name() -> str:
    """Name of the backend in use: 'compiled' or 'python'."""
    return _active.BACKEND


def available_backends() -> dict:
    """All importable backends keyed by name."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def get_backend(name: str):
    """Fetch a specific backend module by name."""
    try:
        return available_backends()[name]
    except KeyError:
        raise KeyError(f"kernel backend {name!r} is not available") from None


conv2d_forward = _active.conv2d_forward
conv2d_backward_input = _active.conv2d_backward_input
conv2d_backward_weights = _active.conv2d_backward_weights
depthwise_forward = _active.depthwise_forward
depthwise_backward_input = _active.depthwise_backward_input
depthwise_backward_weights = _active.depthwise_backward_weights
