"""A minimal dense-tensor neural network engine for (N, F, H, W) data.

Submodules: `kernels` (convolution backends), `layers` (the layer zoo),
`network` (sequential graphs), `losses`, `optim` (Adam), and `serialize`
(model persistence).
"""

from .network import NetworkGraph

__all__ = ["NetworkGraph"]
