"""Losses computed from logits.

Cross entropy goes through a float64 log-sum-exp so large logits cannot
overflow and the returned loss is exact to float64 regardless of the
network dtype. The gradient comes back in the logit dtype for backprop.
"""

from __future__ import annotations

import numpy as np


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross entropy; returns (loss, gradient wrt logits)."""
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D (n, classes), got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, np.ascontiguousarray(grad.astype(logits.dtype))
