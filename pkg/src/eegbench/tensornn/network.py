"""Sequential network graph with explicit train/eval modes.

The graph owns an ordered layer list, an input contract (maps, h, w) for a
single trial, and a class count. Construction walks the shape algebra of
every layer, so incompatible stacks fail before any data moves. Layer
failures during a pass are re-raised as GraphError with the layer index.

`forward` runs the full stack (probabilities when the stack ends in a
softmax); `forward_logits` stops before a terminal softmax so losses can be
computed from logits, and `backward_from_logits` is its adjoint.
"""

from __future__ import annotations

import numpy as np

from ..errors import GraphError
from .layers import Activation, Layer


class NetworkGraph:
    def __init__(self, layers, input_shape, n_classes, dtype=np.float32):
        layers = list(layers)
        if not layers:
            raise GraphError("a network needs at least one layer")
        if len(input_shape) != 3:
            raise GraphError(f"input shape must be (maps, h, w), got {input_shape}")
        if n_classes < 2:
            raise GraphError(f"a classifier needs at least 2 classes, got {n_classes}")
        self.layers: list[Layer] = layers
        self.input_shape = tuple(int(v) for v in input_shape)
        self.n_classes = int(n_classes)
        self.dtype = np.dtype(dtype)
        self.training = False
        shape = self.input_shape
        shapes = [shape]
        for i, layer in enumerate(layers):
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise GraphError(f"layer {i} ({layer.kind}): {exc}") from exc
            shapes.append(shape)
        if shape != (self.n_classes,):
            raise GraphError(
                f"network output shape {shape} does not match ({self.n_classes},)"
            )
        self.layer_shapes = shapes
        last = layers[-1]
        self._has_softmax = isinstance(last, Activation) and last.fn == "softmax"

    # -- modes ---------------------------------------------------------------

    def train_mode(self):
        self.training = True
        return self

    def eval_mode(self):
        self.training = False
        return self

    # -- passes --------------------------------------------------------------

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise GraphError(
                f"input shape {x.shape} does not match (n,) + {self.input_shape}"
            )
        if x.shape[0] < 1:
            raise GraphError("empty batch")
        x = np.ascontiguousarray(x.astype(self.dtype, copy=False))
        if not x.flags.writeable:
            # Locked trial buffers reach here as views; the compiled kernels
            # take writable memoryviews, so materialize a private copy.
            x = x.copy()
        return x

    def _run(self, x, layers, offset, train, rng):
        for i, layer in enumerate(layers):
            try:
                x = layer.forward(x, train=train, rng=rng)
            except ValueError as exc:
                raise GraphError(f"layer {offset + i} ({layer.kind}): {exc}") from exc
        return x

    def forward(self, x, train=None, rng=None):
        """Full stack output; probabilities when the stack ends in softmax."""
        train = self.training if train is None else train
        x = self._check_input(x)
        return self._run(x, self.layers, 0, train, rng)

    def forward_logits(self, x, train=None, rng=None):
        """Stack output before a terminal softmax."""
        train = self.training if train is None else train
        x = self._check_input(x)
        layers = self.layers[:-1] if self._has_softmax else self.layers
        return self._run(x, layers, 0, train, rng)

    def backward_from_logits(self, glogits):
        """Adjoint of forward_logits; fills every layer's grads."""
        layers = self.layers[:-1] if self._has_softmax else self.layers
        g = glogits
        for i in range(len(layers) - 1, -1, -1):
            try:
                g = layers[i].backward(g)
            except ValueError as exc:
                raise GraphError(f"layer {i} ({layers[i].kind}): {exc}") from exc
        return g

    # -- parameters ----------------------------------------------------------

    def parameters(self):
        """Ordered (layer_index, name, array) triples over all parameters."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                out.append((i, name, layer.params[name]))
        return out

    def state_buffers(self):
        """Ordered (layer_index, name, array) triples over persistent buffers."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in layer.state_names:
                out.append((i, name, layer.state[name]))
        return out

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def param_breakdown(self):
        """Per-layer (index, kind, count) rows, trainable parameters only."""
        return [(i, layer.kind, layer.param_count()) for i, layer in enumerate(self.layers)]
