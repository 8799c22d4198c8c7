"""Statistics for decoder comparisons.

Mean class accuracy (MCA) averages per-class recalls over the classes that
actually occur, so imbalanced test segments do not reward majority voting.
Chance level is assessed with a label permutation test whose p-value uses
the add-one estimator p = (1 + #{perm >= observed}) / (1 + n); when the
number of distinct label orderings is small the test enumerates all of them
exactly instead of sampling. Pairwise method comparisons use an exact
two-sided sign test over per-example accuracy differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Permutation statistics within this absolute margin of the observed value
# count as "at least as large"; MCA is a short rational sum, so genuine ties
# land far inside the margin and genuine differences far outside it.
TIE_TOLERANCE = 1e-12

DEFAULT_N_PERMUTATIONS = 10_000
DEFAULT_ALPHA = 0.05
DEFAULT_ENUMERATION_CAP = 100_000

# Monte Carlo permutation draws are generated in blocks of this many rows.
# Each row consumes exactly n uniforms from the generator, so the blocking
# never changes the stream and results are independent of the block size.
_PERM_CHUNK = 512


def mean_class_accuracy(predicted, labels, n_classes: int) -> float:
    """Average of per-class recalls over the classes present in labels."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape or predicted.ndim != 1:
        raise ValueError(
            f"predicted {predicted.shape} and labels {labels.shape} must be "
            "matching 1-d arrays"
        )
    if labels.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if n_classes < 1:
        raise ValueError(f"n_classes must be positive, got {n_classes}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels out of range for n_classes")
    if predicted.min() < 0 or predicted.max() >= n_classes:
        raise ValueError("predictions out of range for n_classes")
    totals = np.bincount(labels, minlength=n_classes)
    hits = np.bincount(labels[predicted == labels], minlength=n_classes)
    present = totals > 0
    return float((hits[present] / totals[present]).mean())


def _mca_many(predicted: np.ndarray, label_rows: np.ndarray, n_classes: int) -> np.ndarray:
    """MCA of one prediction vector against many label rows at once.

    label_rows has shape (r, n); all rows are permutations of the same
    multiset, so the per-class totals are shared.
    """
    totals = np.bincount(label_rows[0], minlength=n_classes).astype(np.float64)
    present = totals > 0
    hit = (label_rows == predicted[None, :])
    scores = np.zeros(label_rows.shape[0])
    for c in np.flatnonzero(present):
        scores += (hit & (label_rows == c)).sum(axis=1) / totals[c]
    return scores / present.sum()


@dataclass(frozen=True)
class PermutationResult:
    p_value: float
    observed: float
    n_used: int
    exhaustive: bool


def _distinct_permutations(counts: np.ndarray) -> int:
    """Number of distinct orderings of a label multiset, n! / prod(c_k!)."""
    total = math.factorial(int(counts.sum()))
    for c in counts:
        total //= math.factorial(int(c))
    return total


def _enumerate_multiset(labels: np.ndarray):
    """Yield every distinct permutation of labels in lexicographic order."""
    seq = sorted(labels.tolist())
    n = len(seq)
    while True:
        yield np.array(seq, dtype=labels.dtype)
        i = n - 2
        while i >= 0 and seq[i] >= seq[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while seq[j] <= seq[i]:
            j -= 1
        seq[i], seq[j] = seq[j], seq[i]
        seq[i + 1 :] = reversed(seq[i + 1 :])


def permutation_test(
    predicted,
    labels,
    n_classes: int,
    n_permutations: int = DEFAULT_N_PERMUTATIONS,
    seed: int = 0,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> PermutationResult:
    """Label permutation test of MCA against chance.

    Enumerates all distinct label orderings when their count is at most
    enumeration_cap, otherwise draws n_permutations uniform shuffles from a
    generator seeded with seed. The p-value is never smaller than
    1 / (1 + n_used).
    """
    predicted = np.ascontiguousarray(predicted, dtype=np.int64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if n_permutations < 1:
        raise ValueError(f"n_permutations must be >= 1, got {n_permutations}")
    observed = mean_class_accuracy(predicted, labels, n_classes)
    counts = np.bincount(labels, minlength=n_classes)
    if (counts > 0).sum() < 2:
        raise ValueError("permutation test needs at least two classes present")
    distinct = _distinct_permutations(counts[counts > 0])
    if distinct <= enumeration_cap:
        at_least = 0
        n_used = 0
        chunk: list[np.ndarray] = []
        for perm in _enumerate_multiset(labels):
            chunk.append(perm)
            if len(chunk) == _PERM_CHUNK:
                scores = _mca_many(predicted, np.stack(chunk), n_classes)
                at_least += int((scores >= observed - TIE_TOLERANCE).sum())
                n_used += len(chunk)
                chunk = []
        if chunk:
            scores = _mca_many(predicted, np.stack(chunk), n_classes)
            at_least += int((scores >= observed - TIE_TOLERANCE).sum())
            n_used += len(chunk)
        # The identity ordering is one of the enumerated permutations, so
        # at_least >= 1 and the exact p never underflows 1 / n_used.
        return PermutationResult(
            p_value=at_least / n_used,
            observed=observed,
            n_used=n_used,
            exhaustive=True,
        )
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    at_least = 0
    done = 0
    while done < n_permutations:
        rows = min(_PERM_CHUNK, n_permutations - done)
        # argsort of iid uniforms is a uniform random permutation; drawing
        # row blocks keeps the consumed stream identical for any chunking.
        u = rng.random((rows, n))
        perms = labels[np.argsort(u, axis=1)]
        scores = _mca_many(predicted, perms, n_classes)
        at_least += int((scores >= observed - TIE_TOLERANCE).sum())
        done += rows
    return PermutationResult(
        p_value=(1 + at_least) / (1 + n_permutations),
        observed=observed,
        n_used=n_permutations,
        exhaustive=False,
    )


@dataclass(frozen=True)
class AccuracyMatrix:
    """Per-example accuracies for a fixed method list; no missing entries."""

    example_ids: tuple[str, ...]
    methods: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (len(self.example_ids), len(self.methods)):
            raise ValueError(
                f"matrix shape {values.shape} does not match "
                f"{len(self.example_ids)} examples x {len(self.methods)} methods"
            )
        if len(set(self.example_ids)) != len(self.example_ids):
            raise ValueError("duplicate example ids")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate method names")
        if not np.isfinite(values).all():
            raise ValueError("accuracies must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_examples(self) -> int:
        return len(self.example_ids)

    def row(self, example_id: str) -> np.ndarray:
        return self.values[self.example_ids.index(example_id)]

    def column(self, method: str) -> np.ndarray:
        return self.values[:, self.methods.index(method)]


def select_significant(
    matrix: AccuracyMatrix,
    p_values: dict[str, dict[str, float]],
    alpha: float = DEFAULT_ALPHA,
) -> tuple[AccuracyMatrix, tuple[str, ...]]:
    """Keep examples whose best (smallest) p-value is strictly below alpha.

    Returns the filtered matrix and the tuple of excluded example ids, in
    the original order.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    kept_rows = []
    kept_ids = []
    excluded = []
    for i, ex in enumerate(matrix.example_ids):
        per_method = p_values[ex]
        best = min(per_method[m] for m in matrix.methods)
        if best < alpha:
            kept_ids.append(ex)
            kept_rows.append(matrix.values[i])
        else:
            excluded.append(ex)
    if not kept_ids:
        return (
            AccuracyMatrix(example_ids=(), methods=matrix.methods,
                           values=np.zeros((0, len(matrix.methods)))),
            tuple(excluded),
        )
    return (
        AccuracyMatrix(
            example_ids=tuple(kept_ids),
            methods=matrix.methods,
            values=np.stack(kept_rows),
        ),
        tuple(excluded),
    )


def normalize_accuracies(matrix: AccuracyMatrix) -> AccuracyMatrix:
    """Divide each row by its mean so every example averages to 1."""
    if matrix.n_examples == 0:
        return matrix
    means = matrix.values.mean(axis=1)
    if (means <= 0).any():
        bad = [matrix.example_ids[i] for i in np.flatnonzero(means <= 0)]
        raise ValueError(f"cannot normalize examples with zero mean accuracy: {bad}")
    return AccuracyMatrix(
        example_ids=matrix.example_ids,
        methods=matrix.methods,
        values=matrix.values / means[:, None],
    )


@dataclass(frozen=True)
class SignTestResult:
    p_value: float
    n_positive: int
    n_negative: int
    n_ties: int
    degenerate: bool


def sign_test(a, b) -> SignTestResult:
    """Exact two-sided sign test on paired values; ties are dropped.

    With every pair tied the test is degenerate and reports p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be matching 1-d arrays, got {a.shape}, {b.shape}")
    if a.size == 0:
        raise ValueError("sign test needs at least one pair")
    diff = a - b
    pos = int((diff > 0).sum())
    neg = int((diff < 0).sum())
    n = pos + neg
    if n == 0:
        return SignTestResult(p_value=1.0, n_positive=0, n_negative=0,
                              n_ties=a.size, degenerate=True)
    k = min(pos, neg)
    # Two-sided p: total binomial(n, 1/2) mass of outcomes at least as
    # extreme as k successes, computed exactly in integer arithmetic.
    tail = sum(math.comb(n, i) for i in range(k + 1))
    p = min(1.0, 2 * tail / 2 ** n)
    return SignTestResult(p_value=p, n_positive=pos, n_negative=neg,
                          n_ties=a.size - n, degenerate=False)


@dataclass(frozen=True)
class OverlapResult:
    """How two prediction vectors relate on shared trials."""

    both_correct: float
    only_first: float
    only_second: float
    both_wrong: float
    n_trials: int

    def as_dict(self) -> dict:
        return {
            "both_correct": self.both_correct,
            "only_first": self.only_first,
            "only_second": self.only_second,
            "both_wrong": self.both_wrong,
            "n_trials": self.n_trials,
        }


def prediction_overlap(pred_a, pred_b, labels) -> OverlapResult:
    """Fractions of trials by joint correctness of two methods."""
    pred_a = np.asarray(pred_a)
    pred_b = np.asarray(pred_b)
    labels = np.asarray(labels)
    if not (pred_a.shape == pred_b.shape == labels.shape) or labels.ndim != 1:
        raise ValueError("overlap needs three matching 1-d arrays")
    if labels.size == 0:
        raise ValueError("overlap needs at least one trial")
    n = labels.size
    ok_a = pred_a == labels
    ok_b = pred_b == labels
    return OverlapResult(
        both_correct=float((ok_a & ok_b).sum() / n),
        only_first=float((ok_a & ~ok_b).sum() / n),
        only_second=float((~ok_a & ok_b).sum() / n),
        both_wrong=float((~ok_a & ~ok_b).sum() / n),
        n_trials=int(n),
    )
