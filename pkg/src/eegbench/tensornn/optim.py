"""Adam with bias correction, updating network parameters in place."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingError


class Adam:
    """One optimizer instance per network; `step` consumes the layers' grads."""

    def __init__(self, net, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.net = net
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = [np.zeros_like(p) for _, _, p in net.parameters()]
        self._v = [np.zeros_like(p) for _, _, p in net.parameters()]

    def step(self):
        """Apply one bias-corrected update from the current gradients."""
        t = self.step_count + 1
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for slot, (i, name, p) in enumerate(self.net.parameters()):
            layer = self.net.layers[i]
            g = layer.grads.get(name)
            if g is None:
                raise TrainingError(
                    f"layer {i} ({layer.kind}) has no gradient for {name!r}; "
                    "run a backward pass before stepping"
                )
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient in layer {i} ({layer.kind}) parameter {name!r}"
                )
            m, v = self._m[slot], self._v[slot]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.step_count = t
