"""Results-package verification.

The cheap audit recomputes everything derivable from the stored
predictions: the config hash, every run's seeds, accuracy, and
permutation p-value, the canonical form of results.json and record.json,
the sha256 of every run artifact, model loadability, and all four
statistics files byte for byte. The
--retrain audit additionally repeats data preparation and training for
every run and compares the regenerated predictions and weights byte for
byte. Verification never trusts a stored number it can recompute.
"""

from __future__ import annotations

import hashlib
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..architectures import build
from ..errors import ConfigError, VerificationError
from ..jsonutil import canonical_dumps, read_json
from ..stats import mean_class_accuracy, permutation_test
from ..tensornn.serialize import MODEL_BIN, MODEL_META, load_model, save_model
from ..training import predict, train
from .config import parse_config
from . import seeds
from .runner import (
    HISTORY_FILENAME,
    PREDICTIONS_FILENAME,
    PREPROCESS_FILENAME,
    PROVENANCE_FILENAME,
    RECORD_FILENAME,
    RESOLVED_CONFIG_FILENAME,
    RESULTS_FILENAME,
    RUNS_DIRNAME,
    STATS_DIRNAME,
    RunOutcome,
    RunRecord,
    _prepare_example,
    build_stats_outputs,
    format_history_csv,
    format_predictions_csv,
    parse_predictions_csv,
    run_dir,
)

_NUMERIC_TOLERANCE = 1e-12

_RUN_FIELDS = ("example_id", "architecture", "status", "seed_init", "seed_train",
               "seed_perm", "accuracy", "p_value", "n_train_trials",
               "n_test_trials", "error", "artifact_sha256")


@dataclass
class VerificationReport:
    package: Path
    issues: list[str] = field(default_factory=list)
    n_runs_checked: int = 0
    retrained: bool = False

    @property
    def ok(self) -> bool:
        return not self.issues


def _close(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return abs(float(a) - float(b)) <= _NUMERIC_TOLERANCE


def _record_from_dict(d: dict) -> RunRecord:
    return RunRecord(**{k: d[k] for k in _RUN_FIELDS})


def verify_package(package_path, retrain: bool = False) -> VerificationReport:
    """Audit a results package; every discrepancy becomes one issue line."""
    package = Path(package_path)
    report = VerificationReport(package=package, retrained=retrain)
    issues = report.issues

    config_path = package / RESOLVED_CONFIG_FILENAME
    results_path = package / RESULTS_FILENAME
    if not config_path.is_file() or not results_path.is_file():
        raise VerificationError(
            f"{package} is not a results package: missing "
            f"{RESOLVED_CONFIG_FILENAME} or {RESULTS_FILENAME}"
        )
    resolved = read_json(config_path)
    try:
        config = parse_config(resolved)
    except ConfigError as exc:
        raise VerificationError(f"stored resolved config does not parse: {exc}") from exc
    if canonical_dumps(config.resolved_dict()) != config_path.read_text():
        issues.append(f"{RESOLVED_CONFIG_FILENAME}: not in canonical resolved form")

    results = read_json(results_path)
    stored_hash = results.get("config_hash")
    if stored_hash != config.config_hash():
        issues.append(
            f"{RESULTS_FILENAME}: config hash mismatch "
            f"(stored {stored_hash}, recomputed {config.config_hash()})"
        )
    if not (package / PROVENANCE_FILENAME).is_file():
        issues.append(f"{PROVENANCE_FILENAME}: missing")

    runs = results.get("runs")
    if not isinstance(runs, list):
        raise VerificationError(f"{RESULTS_FILENAME} has no runs list")
    expected_keys = sorted(
        (ex.id, arch)
        for ex in config.examples
        for arch in sorted(config.architectures)
    )
    actual_keys = [(r.get("example_id"), r.get("architecture")) for r in runs]
    if actual_keys != expected_keys:
        issues.append(
            f"{RESULTS_FILENAME}: run list does not cover examples x architectures "
            "in canonical order"
        )

    n_classes_by_example = {ex.id: ex.n_classes for ex in config.examples}
    outcomes: list[RunOutcome] = []
    for entry in runs:
        try:
            record = _record_from_dict(entry)
        except (KeyError, TypeError):
            issues.append(f"{RESULTS_FILENAME}: malformed run entry {entry!r}")
            continue
        tag = f"runs/{record.example_id}/{record.architecture}"
        report.n_runs_checked += 1
        master = config.master_seed
        derived = (
            seeds.init_seed(master, record.example_id, record.architecture),
            seeds.train_seed(master, record.example_id, record.architecture),
            seeds.permutation_seed(master, record.example_id, record.architecture),
        )
        if (record.seed_init, record.seed_train, record.seed_perm) != derived:
            issues.append(f"{tag}: stored seeds do not match the config derivation")

        directory = run_dir(package, record.example_id, record.architecture)
        record_path = directory / RECORD_FILENAME
        if not record_path.is_file():
            issues.append(f"{tag}: missing {RECORD_FILENAME}")
        elif read_json(record_path) != entry:
            issues.append(f"{tag}: {RECORD_FILENAME} disagrees with {RESULTS_FILENAME}")

        outcome = RunOutcome(record=record)
        outcomes.append(outcome)
        if record.status != "ok":
            if record.error is None:
                issues.append(f"{tag}: failed run has no recorded error")
            continue

        missing = [
            name for name in (MODEL_BIN, MODEL_META, HISTORY_FILENAME, PREDICTIONS_FILENAME)
            if not (directory / name).is_file()
        ]
        if missing:
            issues.append(f"{tag}: missing file(s): {', '.join(missing)}")
            continue

        digests = record.artifact_sha256
        if not isinstance(digests, dict):
            issues.append(f"{tag}: record carries no artifact digests")
        else:
            expected_names = {MODEL_BIN, HISTORY_FILENAME, PREDICTIONS_FILENAME}
            if set(digests) != expected_names:
                issues.append(f"{tag}: artifact digest list is incomplete")
            for name in sorted(expected_names & set(digests)):
                actual = hashlib.sha256((directory / name).read_bytes()).hexdigest()
                if actual != digests[name]:
                    issues.append(
                        f"{tag}: {name} does not match its recorded sha256")

        predictions_text = (directory / PREDICTIONS_FILENAME).read_text()
        try:
            predicted, labels, probs = parse_predictions_csv(predictions_text)
        except Exception as exc:  # noqa: BLE001 - reported as an issue
            issues.append(f"{tag}: unreadable {PREDICTIONS_FILENAME}: {exc}")
            continue
        outcome.predicted = predicted
        outcome.labels = labels
        n_classes = n_classes_by_example[record.example_id]
        if probs.shape[1] != n_classes:
            issues.append(
                f"{tag}: predictions carry {probs.shape[1]} classes, "
                f"example declares {n_classes}"
            )
            continue
        if record.n_test_trials != len(labels):
            issues.append(
                f"{tag}: {len(labels)} prediction rows, record says "
                f"{record.n_test_trials} test trials"
            )
        if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
            issues.append(f"{tag}: probability rows do not sum to 1")
        if not np.array_equal(predicted, probs.argmax(axis=1)):
            issues.append(f"{tag}: predicted column is not the argmax of the probabilities")

        accuracy = mean_class_accuracy(predicted, labels, n_classes)
        if not _close(accuracy, record.accuracy):
            issues.append(
                f"{tag}: recomputed accuracy {accuracy!r} != recorded {record.accuracy!r}"
            )
        perm = permutation_test(
            predicted, labels, n_classes,
            n_permutations=config.stats.n_permutations,
            seed=record.seed_perm,
            enumeration_cap=config.stats.enumeration_cap,
        )
        if not _close(perm.p_value, record.p_value):
            issues.append(
                f"{tag}: recomputed p-value {perm.p_value!r} != recorded {record.p_value!r}"
            )

        try:
            net, meta = load_model(directory)
        except Exception as exc:  # noqa: BLE001 - reported as an issue
            issues.append(f"{tag}: stored model does not load: {exc}")
            continue
        if meta["architecture"] != record.architecture:
            issues.append(
                f"{tag}: model metadata names architecture {meta['architecture']!r}"
            )
        if meta["seed"] != record.seed_init:
            issues.append(f"{tag}: model metadata seed differs from the init seed")
        if net.n_classes != n_classes:
            issues.append(f"{tag}: stored model has {net.n_classes} classes")

    expected_stats = build_stats_outputs(config, outcomes)
    for name, expected_text in expected_stats.items():
        path = package / STATS_DIRNAME / name
        if not path.is_file():
            issues.append(f"stats/{name}: missing")
        elif path.read_text() != expected_text:
            issues.append(f"stats/{name}: contents differ from recomputation")

    expected_results = {
        "format_version": results.get("format_version"),
        "config_hash": config.config_hash(),
        "status": results.get("status"),
        "n_runs": len(runs),
        "n_failed": sum(1 for r in runs if r.get("status") != "ok"),
        "runs": runs,
    }
    if canonical_dumps(expected_results) != results_path.read_text():
        issues.append(f"{RESULTS_FILENAME}: not in canonical form or counts inconsistent")

    if retrain:
        _verify_retrain(package, config, outcomes, issues)
    return report


def _verify_retrain(package: Path, config, outcomes: list[RunOutcome], issues: list[str]):
    """Repeat preparation and training; compare regenerated bytes."""
    examples = {ex.id: ex for ex in config.examples}
    pipelines: dict[str, object] = {}
    for ex_id in sorted({o.record.example_id for o in outcomes}):
        try:
            pipelines[ex_id] = _prepare_example(config, examples[ex_id])
        except Exception as exc:  # noqa: BLE001 - reported as an issue
            pipelines[ex_id] = exc

    for outcome in outcomes:
        record = outcome.record
        tag = f"runs/{record.example_id}/{record.architecture}"
        pipeline = pipelines[record.example_id]
        if record.status != "ok":
            # A stored failure has no artifacts to compare against.
            continue
        if isinstance(pipeline, Exception):
            issues.append(f"{tag}: retrain preprocessing failed: {pipeline}")
            continue
        directory = run_dir(package, record.example_id, record.architecture)
        pp_path = package / RUNS_DIRNAME / record.example_id / PREPROCESS_FILENAME
        if pp_path.is_file():
            if canonical_dumps(pipeline.provenance) != pp_path.read_text():
                issues.append(
                    f"runs/{record.example_id}/{PREPROCESS_FILENAME}: "
                    "contents differ from recomputation"
                )
        else:
            issues.append(f"runs/{record.example_id}/{PREPROCESS_FILENAME}: missing")
        try:
            net = build(
                record.architecture,
                n_channels=pipeline.train.n_channels,
                n_samples=pipeline.train.n_samples,
                n_classes=examples[record.example_id].n_classes,
                seed=record.seed_init,
            )
            hp = config.training_for(record.architecture).hyperparameters(
                seed=record.seed_train)
            model = train(net, pipeline.train, hp, architecture=record.architecture)
            preds = predict(model, pipeline.test)
        except Exception as exc:  # noqa: BLE001 - reported as an issue
            issues.append(f"{tag}: retraining failed: {exc}")
            continue
        regenerated = format_predictions_csv(
            preds.predicted, preds.labels, preds.probabilities)
        if regenerated != (directory / PREDICTIONS_FILENAME).read_text():
            issues.append(f"{tag}: retrained predictions differ")
        if format_history_csv(model.history) != (directory / HISTORY_FILENAME).read_text():
            issues.append(f"{tag}: retrained history differs")
        with tempfile.TemporaryDirectory() as tmp:
            save_model(net, tmp, architecture=record.architecture, seed=record.seed_init)
            if (Path(tmp) / MODEL_BIN).read_bytes() != (directory / MODEL_BIN).read_bytes():
                issues.append(f"{tag}: retrained model weights differ")
