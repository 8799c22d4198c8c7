"""Comparison runner: data preparation, training, statistics, packaging.

A comparison crosses every configured example with every architecture.
Each example's recording is generated (or loaded) and preprocessed once;
each (example, architecture) run then trains from its own derived seeds,
predicts the held-out test trials, and scores chance level with a
permutation test. A failing run records its error and the package is
marked partial; remaining runs continue. All output files are pure
functions of the resolved config, so re-running a config reproduces the
package byte for byte; wall-clock facts are quarantined in
provenance.json.
"""

from __future__ import annotations

import hashlib
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..architectures import build
from ..eegdata import Recording, generate_synthetic, load_recording
from ..errors import ConfigError, EegBenchError, HarnessError
from ..jsonutil import canonical_dumps, write_canonical_json
from ..preprocess import run_pipeline
from ..stats import (
    AccuracyMatrix,
    mean_class_accuracy,
    normalize_accuracies,
    permutation_test,
    prediction_overlap,
    select_significant,
    sign_test,
)
from ..tensornn import kernels
from ..tensornn.serialize import MODEL_BIN, save_model
from ..training import evaluate, predict, train
from .config import ComparisonConfig, ExampleConfig, RecordingSource
from . import seeds

RESOLVED_CONFIG_FILENAME = "config.resolved.json"
RESULTS_FILENAME = "results.json"
PROVENANCE_FILENAME = "provenance.json"
RUNS_DIRNAME = "runs"
STATS_DIRNAME = "stats"
REPORT_DIRNAME = "report"
RECORD_FILENAME = "record.json"
HISTORY_FILENAME = "history.csv"
PREDICTIONS_FILENAME = "predictions.csv"
PREPROCESS_FILENAME = "preprocess.json"
PACKAGE_FORMAT_VERSION = 1

EXCLUDED_INCOMPLETE = "incomplete_runs"
EXCLUDED_NOT_SIGNIFICANT = "not_significant"
EXCLUDED_ZERO_ACCURACY = "zero_accuracy"


@dataclass
class RunRecord:
    """Outcome of one (example, architecture) run."""

    example_id: str
    architecture: str
    status: str  # "ok" | "failed"
    seed_init: int
    seed_train: int
    seed_perm: int
    accuracy: float | None = None
    p_value: float | None = None
    n_train_trials: int | None = None
    n_test_trials: int | None = None
    error: str | None = None
    artifact_sha256: dict | None = None

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "architecture": self.architecture,
            "status": self.status,
            "seed_init": self.seed_init,
            "seed_train": self.seed_train,
            "seed_perm": self.seed_perm,
            "accuracy": self.accuracy,
            "p_value": self.p_value,
            "n_train_trials": self.n_train_trials,
            "n_test_trials": self.n_test_trials,
            "error": self.error,
            "artifact_sha256": self.artifact_sha256,
        }


@dataclass
class RunOutcome:
    """A run record plus the in-memory predictions backing the statistics."""

    record: RunRecord
    predicted: np.ndarray | None = None
    labels: np.ndarray | None = None
    history: list = field(default_factory=list)


@dataclass
class ResultsPackage:
    path: Path
    config: ComparisonConfig
    records: list[RunRecord]
    status: str  # "complete" | "partial"

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.status != "ok")


def run_dir(package: Path, example_id: str, architecture: str) -> Path:
    return Path(package) / RUNS_DIRNAME / example_id / architecture


def _float_repr(x) -> str:
    return repr(float(x))


def format_history_csv(history) -> str:
    lines = ["epoch,loss,train_accuracy"]
    for row in history:
        lines.append(f"{row.epoch},{_float_repr(row.loss)},{_float_repr(row.train_accuracy)}")
    return "\n".join(lines) + "\n"


def format_predictions_csv(predicted, labels, probabilities) -> str:
    n_classes = probabilities.shape[1]
    header = ["trial", "label", "predicted"] + [f"prob_{k}" for k in range(n_classes)]
    lines = [",".join(header)]
    for i in range(len(labels)):
        cells = [str(i), str(int(labels[i])), str(int(predicted[i]))]
        cells.extend(_float_repr(p) for p in probabilities[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_predictions_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of format_predictions_csv: (predicted, labels, probabilities)."""
    lines = text.strip("\n").split("\n")
    header = lines[0].split(",")
    if header[:3] != ["trial", "label", "predicted"]:
        raise EegBenchError(f"unexpected predictions header: {lines[0]!r}")
    n_classes = len(header) - 3
    predicted, labels, probs = [], [], []
    for line in lines[1:]:
        cells = line.split(",")
        labels.append(int(cells[1]))
        predicted.append(int(cells[2]))
        probs.append([float(c) for c in cells[3:]])
    return (
        np.array(predicted, dtype=np.int64),
        np.array(labels, dtype=np.int64),
        np.array(probs, dtype=np.float64).reshape(len(labels), n_classes),
    )


def _load_example_recording(example: ExampleConfig, master_seed: int) -> Recording:
    if isinstance(example.source, RecordingSource):
        return load_recording(example.source.path)
    spec = example.source.spec(example.n_classes, example.window)
    return generate_synthetic(spec, seeds.generation_seed(master_seed, example.id))


def _prepare_example(config: ComparisonConfig, example: ExampleConfig):
    recording = _load_example_recording(example, config.master_seed)
    return run_pipeline(
        recording, example.window, config.preprocessing, example.n_classes
    )


def _execute_run(
    config: ComparisonConfig,
    example: ExampleConfig,
    architecture: str,
    pipeline,
    package: Path,
) -> RunOutcome:
    master = config.master_seed
    record = RunRecord(
        example_id=example.id,
        architecture=architecture,
        status="failed",
        seed_init=seeds.init_seed(master, example.id, architecture),
        seed_train=seeds.train_seed(master, example.id, architecture),
        seed_perm=seeds.permutation_seed(master, example.id, architecture),
    )
    outcome = RunOutcome(record=record)
    if isinstance(pipeline, Exception):
        record.error = f"preprocessing failed: {pipeline}"
        return outcome
    try:
        trainset, testset = pipeline.train, pipeline.test
        net = build(
            architecture,
            n_channels=trainset.n_channels,
            n_samples=trainset.n_samples,
            n_classes=example.n_classes,
            seed=record.seed_init,
        )
        hp = config.training_for(architecture).hyperparameters(seed=record.seed_train)
        model = train(net, trainset, hp, architecture=architecture)
        preds = predict(model, testset)
        result = evaluate(preds)
        perm = permutation_test(
            preds.predicted,
            preds.labels,
            example.n_classes,
            n_permutations=config.stats.n_permutations,
            seed=record.seed_perm,
            enumeration_cap=config.stats.enumeration_cap,
        )
        directory = run_dir(package, example.id, architecture)
        directory.mkdir(parents=True, exist_ok=True)
        save_model(net, directory, architecture=architecture, seed=record.seed_init)
        (directory / HISTORY_FILENAME).write_text(
            format_history_csv(model.history), newline="\n")
        (directory / PREDICTIONS_FILENAME).write_text(
            format_predictions_csv(preds.predicted, preds.labels, preds.probabilities),
            newline="\n")
        record.status = "ok"
        record.accuracy = result.mean_class_accuracy
        record.p_value = perm.p_value
        record.n_train_trials = trainset.n_trials
        record.n_test_trials = testset.n_trials
        record.artifact_sha256 = {
            name: hashlib.sha256((directory / name).read_bytes()).hexdigest()
            for name in (MODEL_BIN, HISTORY_FILENAME, PREDICTIONS_FILENAME)
        }
        outcome.predicted = preds.predicted
        outcome.labels = preds.labels
        outcome.history = model.history
    except Exception as exc:  # noqa: BLE001 - a failed run must not sink the others
        record.error = f"{type(exc).__name__}: {exc}"
    directory = run_dir(package, example.id, architecture)
    directory.mkdir(parents=True, exist_ok=True)
    write_canonical_json(directory / RECORD_FILENAME, record.to_dict())
    return outcome


def build_stats_outputs(config: ComparisonConfig, outcomes: list[RunOutcome]) -> dict:
    """Aggregate statistics files as {relative name: text}, pure in outcomes.

    Examples missing any architecture are excluded as incomplete. Examples
    whose best permutation p-value is not below alpha are excluded as not
    significant; an all-zero accuracy row cannot be normalized and is
    excluded as well. Pairwise sign tests and prediction overlaps run over
    the surviving examples.
    """
    archs = tuple(sorted(config.architectures))
    example_ids = sorted(ex.id for ex in config.examples)
    by_key = {(o.record.example_id, o.record.architecture): o for o in outcomes}

    excluded: list[dict] = []
    complete: list[str] = []
    for ex in example_ids:
        failed = [a for a in archs
                  if by_key.get((ex, a)) is None or by_key[(ex, a)].record.status != "ok"]
        if failed:
            excluded.append({
                "example_id": ex,
                "reason": EXCLUDED_INCOMPLETE,
                "detail": f"failed architectures: {', '.join(failed)}",
            })
        else:
            complete.append(ex)

    values = np.array(
        [[by_key[(ex, a)].record.accuracy for a in archs] for ex in complete],
        dtype=np.float64,
    ).reshape(len(complete), len(archs))
    matrix = AccuracyMatrix(example_ids=tuple(complete), methods=archs, values=values)
    p_values = {
        ex: {a: by_key[(ex, a)].record.p_value for a in archs} for ex in complete
    }

    selected, not_significant = select_significant(matrix, p_values, config.stats.alpha)
    for ex in not_significant:
        excluded.append({
            "example_id": ex,
            "reason": EXCLUDED_NOT_SIGNIFICANT,
            "detail": f"smallest p-value {min(p_values[ex].values())!r} "
                      f"not below alpha {config.stats.alpha!r}",
        })
    zero_rows = [ex for i, ex in enumerate(selected.example_ids)
                 if selected.values[i].mean() <= 0]
    if zero_rows:
        keep = [ex for ex in selected.example_ids if ex not in zero_rows]
        for ex in zero_rows:
            excluded.append({
                "example_id": ex,
                "reason": EXCLUDED_ZERO_ACCURACY,
                "detail": "mean accuracy is zero; the row cannot be normalized",
            })
        rows = [selected.values[selected.example_ids.index(ex)] for ex in keep]
        selected = AccuracyMatrix(
            example_ids=tuple(keep),
            methods=archs,
            values=np.array(rows, dtype=np.float64).reshape(len(keep), len(archs)),
        )
    normalized = normalize_accuracies(selected)
    norm_by_example = {
        ex: dict(zip(archs, normalized.values[i]))
        for i, ex in enumerate(normalized.example_ids)
    }

    lines = ["example_id,architecture,accuracy,normalized_accuracy,p_value"]
    for ex in complete:
        for a in archs:
            rec = by_key[(ex, a)].record
            norm = norm_by_example.get(ex, {}).get(a)
            lines.append(",".join([
                ex, a, _float_repr(rec.accuracy),
                "" if norm is None else _float_repr(norm),
                _float_repr(rec.p_value),
            ]))
    accuracy_csv = "\n".join(lines) + "\n"

    lines = ["example_id,architecture,normalized_accuracy"]
    for ex in normalized.example_ids:
        for a in archs:
            lines.append(f"{ex},{a},{_float_repr(norm_by_example[ex][a])}")
    normalized_csv = "\n".join(lines) + "\n"

    pairs = []
    kept = list(normalized.example_ids)
    for i, first in enumerate(archs):
        for second in archs[i + 1 :]:
            if not kept:
                break
            st = sign_test(
                [norm_by_example[ex][first] for ex in kept],
                [norm_by_example[ex][second] for ex in kept],
            )
            per_example = {}
            pooled_a, pooled_b, pooled_labels = [], [], []
            for ex in kept:
                oa, ob = by_key[(ex, first)], by_key[(ex, second)]
                per_example[ex] = prediction_overlap(
                    oa.predicted, ob.predicted, oa.labels).as_dict()
                pooled_a.append(oa.predicted)
                pooled_b.append(ob.predicted)
                pooled_labels.append(oa.labels)
            pooled = prediction_overlap(
                np.concatenate(pooled_a),
                np.concatenate(pooled_b),
                np.concatenate(pooled_labels),
            ).as_dict()
            pairs.append({
                "first": first,
                "second": second,
                "n_examples": len(kept),
                "mean_normalized_first": float(np.mean(
                    [norm_by_example[ex][first] for ex in kept])),
                "mean_normalized_second": float(np.mean(
                    [norm_by_example[ex][second] for ex in kept])),
                "sign_test": {
                    "p_value": st.p_value,
                    "n_positive": st.n_positive,
                    "n_negative": st.n_negative,
                    "n_ties": st.n_ties,
                    "degenerate": st.degenerate,
                },
                "overlap": {"pooled": pooled, "per_example": per_example},
            })
    pairwise = {
        "architectures": list(archs),
        "n_selected_examples": len(kept),
        "pairs": pairs,
    }
    if not kept:
        pairwise["note"] = "no significant examples"

    excluded.sort(key=lambda e: e["example_id"])
    return {
        "accuracy_matrix.csv": accuracy_csv,
        "normalized.csv": normalized_csv,
        "pairwise.json": canonical_dumps(pairwise),
        "excluded.json": canonical_dumps({"excluded": excluded}),
    }


def results_dict(config: ComparisonConfig, records: list[RunRecord], status: str) -> dict:
    ordered = sorted(records, key=lambda r: (r.example_id, r.architecture))
    return {
        "format_version": PACKAGE_FORMAT_VERSION,
        "config_hash": config.config_hash(),
        "status": status,
        "n_runs": len(ordered),
        "n_failed": sum(1 for r in ordered if r.status != "ok"),
        "runs": [r.to_dict() for r in ordered],
    }


def run_comparison(
    config: ComparisonConfig,
    out_dir=None,
    workers: int | None = None,
) -> ResultsPackage:
    """Execute the full comparison and write a results package.

    out_dir overrides config.output_dir; one of the two must be set and
    must name a new or empty directory. workers bounds the task pool; it
    never changes any output byte.
    """
    target = out_dir if out_dir is not None else config.output_dir
    if target is None:
        raise ConfigError("no output directory: pass out_dir or set output_dir in the config")
    package = Path(target)
    if package.exists() and any(package.iterdir()):
        raise ConfigError(f"output directory {package} is not empty")
    package.mkdir(parents=True, exist_ok=True)
    (package / RUNS_DIRNAME).mkdir()
    (package / STATS_DIRNAME).mkdir()
    (package / REPORT_DIRNAME).mkdir()
    write_canonical_json(package / RESOLVED_CONFIG_FILENAME, config.resolved_dict())

    n_workers = workers if workers is not None else config.workers
    if n_workers < 1:
        raise ConfigError(f"workers must be >= 1, got {n_workers}")

    examples = sorted(config.examples, key=lambda e: e.id)
    archs = tuple(sorted(config.architectures))

    pipelines: dict[str, object] = {}
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = {
            ex.id: pool.submit(_prepare_example, config, ex) for ex in examples
        }
        for ex in examples:
            try:
                pipelines[ex.id] = futures[ex.id].result()
            except Exception as exc:  # noqa: BLE001 - recorded per run below
                pipelines[ex.id] = exc

    outcomes: list[RunOutcome] = []
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [
            pool.submit(_execute_run, config, ex, arch, pipelines[ex.id], package)
            for ex in examples
            for arch in archs
        ]
        outcomes = [f.result() for f in futures]
    outcomes.sort(key=lambda o: (o.record.example_id, o.record.architecture))

    for ex in examples:
        pipeline = pipelines[ex.id]
        if isinstance(pipeline, Exception):
            continue
        ex_dir = package / RUNS_DIRNAME / ex.id
        ex_dir.mkdir(parents=True, exist_ok=True)
        write_canonical_json(ex_dir / PREPROCESS_FILENAME, pipeline.provenance)

    records = [o.record for o in outcomes]
    n_ok = sum(1 for r in records if r.status == "ok")
    if n_ok == 0:
        first_error = next((r.error for r in records if r.error), "unknown")
        raise HarnessError(f"all {len(records)} runs failed; first error: {first_error}")
    status = "complete" if n_ok == len(records) else "partial"

    stats_dir = package / STATS_DIRNAME
    for name, text in build_stats_outputs(config, outcomes).items():
        (stats_dir / name).write_text(text, newline="\n")
    write_canonical_json(package / RESULTS_FILENAME, results_dict(config, records, status))
    write_canonical_json(package / PROVENANCE_FILENAME, {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "tool": "eegbench",
        "tool_version": __version__,
        "kernel_backend": kernels.backend_name(),
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "platform": platform.platform(),
    })
    return ResultsPackage(path=package, config=config, records=records, status=status)
