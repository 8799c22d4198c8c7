"""Mini-batch training, prediction, and per-example accuracy evaluation.

Training iterates seeded shuffles over the training trials, optimizing
softmax cross entropy with Adam. A trailing partial batch is kept when it
still has at least two trials (batchnorm needs that many) and dropped
otherwise. Identical (network seed, data, hyperparameters) reproduce the
trained model bit for bit; the returned network is in eval mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .eegdata import TrialSet
from .stats import mean_class_accuracy
from .tensornn.losses import cross_entropy_loss
from .tensornn.network import NetworkGraph
from .tensornn.optim import Adam


@dataclass(frozen=True)
class Hyperparameters:
    """Training knobs; defaults follow the standard Adam configuration."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    n_epochs: int = 100
    seed: int = 0
    max_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.batch_size < 2:
            raise ValueError(f"batch size must be >= 2, got {self.batch_size}")
        if self.n_epochs < 1:
            raise ValueError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.max_norm is not None and not self.max_norm > 0:
            raise ValueError(f"max_norm must be positive when set, got {self.max_norm}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "batch_size": self.batch_size,
            "n_epochs": self.n_epochs,
            "seed": self.seed,
            "max_norm": self.max_norm,
        }


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float


@dataclass
class TrainedModel:
    architecture: str
    net: NetworkGraph
    history: list[EpochStats]
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    """Per-trial predictions; argmax ties resolve to the lowest class index."""

    predicted: np.ndarray
    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        predicted = np.ascontiguousarray(self.predicted, dtype=np.int64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        probs = np.ascontiguousarray(self.probabilities, dtype=np.float64)
        if probs.ndim != 2 or predicted.shape != (probs.shape[0],) \
                or labels.shape != (probs.shape[0],):
            raise ValueError(
                f"inconsistent prediction record shapes: predicted {predicted.shape}, "
                f"probabilities {probs.shape}, labels {labels.shape}"
            )
        if probs.shape[0] < 1:
            raise ValueError("a prediction record needs at least one trial")
        sums = probs.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise ValueError("probability rows must sum to 1 within 1e-6")
        if not np.array_equal(predicted, probs.argmax(axis=1)):
            raise ValueError("predicted classes must be the argmax of the probabilities")
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "labels", labels)

    @property
    def n_trials(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probabilities.shape[1]


@dataclass(frozen=True)
class EvaluationResult:
    mean_class_accuracy: float
    per_class_accuracy: tuple[float | None, ...]
    missing_classes: tuple[int, ...]


def _max_norm_clip(net: NetworkGraph, limit: float) -> None:
    """Rescale weight tensors whose per-unit L2 norm exceeds the limit."""
    for i, name, p in net.parameters():
        kind = net.layers[i].kind
        if name in ("b", "pb", "gamma", "beta"):
            continue
        if kind == "dense":
            norms = np.sqrt(np.square(p).sum(axis=0, keepdims=True))
        else:
            norms = np.sqrt(
                np.square(p).sum(axis=tuple(range(1, p.ndim)), keepdims=True)
            )
        np.maximum(norms, 1e-12, out=norms)
        scale = np.minimum(1.0, limit / norms)
        p *= scale.astype(p.dtype)


def train(
    net: NetworkGraph,
    trainset: TrialSet,
    hp: Hyperparameters,
    architecture: str = "",
) -> TrainedModel:
    """Train in place and return the model with its per-epoch history."""
    n = trainset.n_trials
    if (1, trainset.n_channels, trainset.n_samples) != net.input_shape:
        raise TrainingError(
            f"trial shape (1, {trainset.n_channels}, {trainset.n_samples}) does not "
            f"match the network input {net.input_shape}"
        )
    if trainset.n_classes != net.n_classes:
        raise TrainingError(
            f"trial set has {trainset.n_classes} classes, network {net.n_classes}"
        )
    if n < hp.batch_size:
        raise TrainingError(
            f"{n} trials cannot fill one batch of {hp.batch_size}"
        )
    root = np.random.SeedSequence(hp.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in root.spawn(2))
    optimizer = Adam(net, hp.learning_rate, hp.beta1, hp.beta2, hp.eps)
    data = trainset.data[:, None, :, :]
    labels = trainset.labels
    history: list[EpochStats] = []
    net.train_mode()
    for epoch in range(hp.n_epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        total_seen = 0
        for start in range(0, n, hp.batch_size):
            idx = order[start : start + hp.batch_size]
            if idx.size < 2:
                continue
            xb = np.ascontiguousarray(data[idx]).astype(net.dtype, copy=False)
            yb = labels[idx]
            logits = net.forward_logits(xb, train=True, rng=dropout_rng)
            loss, grad = cross_entropy_loss(logits, yb)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // hp.batch_size}"
                )
            net.backward_from_logits(grad)
            optimizer.step()
            if hp.max_norm is not None:
                _max_norm_clip(net, hp.max_norm)
            total_loss += loss * idx.size
            total_correct += int((logits.argmax(axis=1) == yb).sum())
            total_seen += idx.size
        history.append(EpochStats(
            epoch=epoch,
            loss=total_loss / total_seen,
            train_accuracy=total_correct / total_seen,
        ))
    net.eval_mode()
    return TrainedModel(
        architecture=architecture, net=net, history=history,
        provenance={"seed": hp.seed, "n_trials": n},
    )


def predict(model, trials: TrialSet, batch_size: int = 256) -> PredictionRecord:
    """Eval-mode prediction; dropout off, batchnorm running statistics."""
    net = model.net if isinstance(model, TrainedModel) else model
    if (1, trials.n_channels, trials.n_samples) != net.input_shape:
        raise TrainingError(
            f"trial shape (1, {trials.n_channels}, {trials.n_samples}) does not "
            f"match the network input {net.input_shape}"
        )
    rows = []
    data = trials.data[:, None, :, :]
    for start in range(0, trials.n_trials, batch_size):
        xb = np.ascontiguousarray(data[start : start + batch_size])
        rows.append(net.forward(xb, train=False).astype(np.float64))
    probs = np.concatenate(rows, axis=0)
    return PredictionRecord(
        predicted=probs.argmax(axis=1),
        probabilities=probs,
        labels=trials.labels,
    )


def evaluate(preds: PredictionRecord) -> EvaluationResult:
    """Mean class accuracy with a per-class breakdown.

    Classes absent from the labels are reported as None and listed in
    missing_classes; they do not enter the mean.
    """
    k = preds.n_classes
    labels, predicted = preds.labels, preds.predicted
    per_class: list[float | None] = []
    missing: list[int] = []
    for c in range(k):
        in_class = labels == c
        if not in_class.any():
            per_class.append(None)
            missing.append(c)
            continue
        per_class.append(float((predicted[in_class] == c).mean()))
    mca = mean_class_accuracy(predicted, labels, k)
    return EvaluationResult(
        mean_class_accuracy=mca,
        per_class_accuracy=tuple(per_class),
        missing_classes=tuple(missing),
    )
