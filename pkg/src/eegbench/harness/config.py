"""Comparison configuration: strict JSON parsing and canonical resolution.

Configs are plain JSON. Parsing is strict: unknown fields anywhere raise
ConfigError, as do wrong types and out-of-range values, so a typo can
never silently fall back to a default. The resolved form materializes
every default; its canonical dump (minus fields that cannot influence any
computed number: output_dir, workers) is hashed into config_hash, which
names the comparison for verification.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from ..architectures import ARCHITECTURES
from ..eegdata import EpochWindow, SyntheticSpec
from ..errors import ConfigError, DataFormatError, GenerationError
from ..jsonutil import canonical_dumps, read_json
from ..preprocess import CleaningThresholds, PipelineSettings
from ..stats import DEFAULT_ALPHA, DEFAULT_ENUMERATION_CAP, DEFAULT_N_PERMUTATIONS
from ..training import Hyperparameters

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]*$")

# Fields of the resolved config that cannot change any computed number;
# they are omitted from the config hash.
HASH_EXEMPT_FIELDS = ("output_dir", "workers")

_HP_FIELDS = ("learning_rate", "beta1", "beta2", "eps", "batch_size",
              "n_epochs", "max_norm")
_HP_DEFAULTS = {k: getattr(Hyperparameters(), k) for k in _HP_FIELDS}


def _expect_mapping(obj, ctx: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{ctx} must be a JSON object, got {type(obj).__name__}")
    return dict(obj)


def _no_leftovers(d: dict, ctx: str) -> None:
    if d:
        raise ConfigError(f"unknown field(s) in {ctx}: {', '.join(sorted(d))}")


def _as_int(value, ctx: str) -> int:
    if value is None:
        raise ConfigError(f"missing required field {ctx}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{ctx} must be an integer, got {value!r}")
    return value


def _as_float(value, ctx: str) -> float:
    if value is None:
        raise ConfigError(f"missing required field {ctx}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{ctx} must be a number, got {value!r}")
    return float(value)


def _as_str(value, ctx: str) -> str:
    if value is None:
        raise ConfigError(f"missing required field {ctx}")
    if not isinstance(value, str):
        raise ConfigError(f"{ctx} must be a string, got {value!r}")
    return value


def _as_bool(value, ctx: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{ctx} must be a boolean, got {value!r}")
    return value


def _as_id(value, ctx: str) -> str:
    s = _as_str(value, ctx)
    if not _ID_RE.match(s):
        raise ConfigError(
            f"{ctx} must match [A-Za-z0-9][A-Za-z0-9_-]*, got {s!r}"
        )
    return s


@dataclass(frozen=True)
class StatsSettings:
    n_permutations: int = DEFAULT_N_PERMUTATIONS
    alpha: float = DEFAULT_ALPHA
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def to_dict(self) -> dict:
        return {
            "n_permutations": self.n_permutations,
            "alpha": self.alpha,
            "enumeration_cap": self.enumeration_cap,
        }


@dataclass(frozen=True)
class TrainingSettings:
    """Hyperparameters minus the seed, which is always derived."""

    learning_rate: float = _HP_DEFAULTS["learning_rate"]
    beta1: float = _HP_DEFAULTS["beta1"]
    beta2: float = _HP_DEFAULTS["beta2"]
    eps: float = _HP_DEFAULTS["eps"]
    batch_size: int = _HP_DEFAULTS["batch_size"]
    n_epochs: int = _HP_DEFAULTS["n_epochs"]
    max_norm: float | None = _HP_DEFAULTS["max_norm"]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _HP_FIELDS}

    def hyperparameters(self, seed: int) -> Hyperparameters:
        return Hyperparameters(seed=seed, **self.to_dict())


@dataclass(frozen=True)
class SyntheticSource:
    """Synthetic recording source; class count and window come from the example."""

    n_channels: int
    source_rate_hz: float
    n_trials: int
    snr: float
    class_balance: tuple[float, ...] | None = None
    artifact_rate: float = 0.0
    broken_channel_count: int = 0
    inter_trial_gap_s: float = 0.0
    subject_id: str = "synthetic"

    kind = "synthetic"

    def spec(self, n_classes: int, window: EpochWindow) -> SyntheticSpec:
        return SyntheticSpec(
            n_classes=n_classes,
            n_channels=self.n_channels,
            source_rate_hz=self.source_rate_hz,
            n_trials=self.n_trials,
            window=window,
            snr=self.snr,
            class_balance=self.class_balance,
            artifact_rate=self.artifact_rate,
            broken_channel_count=self.broken_channel_count,
            inter_trial_gap_s=self.inter_trial_gap_s,
            subject_id=self.subject_id,
        )

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "n_channels": self.n_channels,
            "source_rate_hz": self.source_rate_hz,
            "n_trials": self.n_trials,
            "snr": self.snr,
            "class_balance": list(self.class_balance) if self.class_balance else None,
            "artifact_rate": self.artifact_rate,
            "broken_channel_count": self.broken_channel_count,
            "inter_trial_gap_s": self.inter_trial_gap_s,
            "subject_id": self.subject_id,
        }


@dataclass(frozen=True)
class RecordingSource:
    """On-disk recording container source."""

    path: str

    kind = "recording"

    def to_dict(self) -> dict:
        return {"type": self.kind, "path": self.path}


@dataclass(frozen=True)
class ExampleConfig:
    id: str
    n_classes: int
    window: EpochWindow
    source: SyntheticSource | RecordingSource

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "n_classes": self.n_classes,
            "window": self.window.to_dict(),
            "source": self.source.to_dict(),
        }


@dataclass(frozen=True)
class ComparisonConfig:
    examples: tuple[ExampleConfig, ...]
    architectures: tuple[str, ...]
    master_seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    preprocessing: PipelineSettings = field(default_factory=PipelineSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    per_architecture: dict = field(default_factory=dict)
    stats: StatsSettings = field(default_factory=StatsSettings)

    def training_for(self, architecture: str) -> TrainingSettings:
        override = self.per_architecture.get(architecture)
        if not override:
            return self.training
        merged = self.training.to_dict()
        merged.update(override)
        return TrainingSettings(**merged)

    def resolved_dict(self) -> dict:
        pp = self.preprocessing
        return {
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "architectures": list(self.architectures),
            "examples": [ex.to_dict() for ex in self.examples],
            "preprocessing": {
                "band_low_hz": pp.band_low_hz,
                "band_high_hz": pp.band_high_hz,
                "target_rate_hz": pp.target_rate_hz,
                "test_fraction": pp.test_fraction,
                "filter_order": pp.filter_order,
                "standardize": pp.standardize,
                "cleaning": {
                    "amplitude_uv": pp.thresholds.amplitude_uv,
                    "broken_fraction": pp.thresholds.broken_fraction,
                },
            },
            "training": self.training.to_dict(),
            "per_architecture": {
                arch: self.training_for(arch).to_dict()
                for arch in self.architectures
            },
            "stats": self.stats.to_dict(),
        }

    def config_hash(self) -> str:
        resolved = self.resolved_dict()
        for name in HASH_EXEMPT_FIELDS:
            resolved.pop(name, None)
        return hashlib.sha256(canonical_dumps(resolved).encode("ascii")).hexdigest()


def _parse_window(obj, ctx: str) -> EpochWindow:
    d = _expect_mapping(obj, ctx)
    try:
        return EpochWindow.from_dict(d)
    except (DataFormatError, ValueError, TypeError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def _parse_synthetic_source(d: dict, ctx: str) -> SyntheticSource:
    kwargs = {
        "n_channels": _as_int(d.pop("n_channels", None), f"{ctx}.n_channels"),
        "source_rate_hz": _as_float(d.pop("source_rate_hz", None), f"{ctx}.source_rate_hz"),
        "n_trials": _as_int(d.pop("n_trials", None), f"{ctx}.n_trials"),
        "snr": _as_float(d.pop("snr", None), f"{ctx}.snr"),
    }
    if "class_balance" in d:
        balance = d.pop("class_balance")
        if balance is not None:
            if not isinstance(balance, list) or not balance:
                raise ConfigError(f"{ctx}.class_balance must be a non-empty list or null")
            balance = tuple(
                _as_float(w, f"{ctx}.class_balance[{i}]") for i, w in enumerate(balance)
            )
        kwargs["class_balance"] = balance
    if "artifact_rate" in d:
        kwargs["artifact_rate"] = _as_float(d.pop("artifact_rate"), f"{ctx}.artifact_rate")
    if "broken_channel_count" in d:
        kwargs["broken_channel_count"] = _as_int(
            d.pop("broken_channel_count"), f"{ctx}.broken_channel_count")
    if "inter_trial_gap_s" in d:
        kwargs["inter_trial_gap_s"] = _as_float(
            d.pop("inter_trial_gap_s"), f"{ctx}.inter_trial_gap_s")
    if "subject_id" in d:
        kwargs["subject_id"] = _as_str(d.pop("subject_id"), f"{ctx}.subject_id")
    _no_leftovers(d, ctx)
    return SyntheticSource(**kwargs)


def _parse_source(obj, ctx: str):
    d = _expect_mapping(obj, ctx)
    kind = _as_str(d.pop("type", None), f"{ctx}.type")
    if kind == "synthetic":
        return _parse_synthetic_source(d, ctx)
    if kind == "recording":
        path = _as_str(d.pop("path", None), f"{ctx}.path")
        _no_leftovers(d, ctx)
        return RecordingSource(path=path)
    raise ConfigError(f"{ctx}.type must be 'synthetic' or 'recording', got {kind!r}")


def _parse_example(obj, ctx: str) -> ExampleConfig:
    d = _expect_mapping(obj, ctx)
    ex_id = _as_id(d.pop("id", None), f"{ctx}.id")
    n_classes = _as_int(d.pop("n_classes", None), f"{ctx}.n_classes")
    if n_classes < 2:
        raise ConfigError(f"{ctx}.n_classes must be >= 2, got {n_classes}")
    window = _parse_window(d.pop("window", None), f"{ctx}.window")
    source = _parse_source(d.pop("source", None), f"{ctx}.source")
    _no_leftovers(d, ctx)
    example = ExampleConfig(id=ex_id, n_classes=n_classes, window=window, source=source)
    if isinstance(source, SyntheticSource):
        try:
            source.spec(n_classes, window)
        except GenerationError as exc:
            raise ConfigError(f"{ctx}: {exc}") from exc
    return example


def _parse_preprocessing(obj) -> PipelineSettings:
    defaults = PipelineSettings()
    if obj is None:
        return defaults
    d = _expect_mapping(obj, "preprocessing")
    cleaning = CleaningThresholds()
    if "cleaning" in d:
        c = _expect_mapping(d.pop("cleaning"), "preprocessing.cleaning")
        kwargs = {}
        if "amplitude_uv" in c:
            kwargs["amplitude_uv"] = _as_float(
                c.pop("amplitude_uv"), "preprocessing.cleaning.amplitude_uv")
        if "broken_fraction" in c:
            kwargs["broken_fraction"] = _as_float(
                c.pop("broken_fraction"), "preprocessing.cleaning.broken_fraction")
        _no_leftovers(c, "preprocessing.cleaning")
        try:
            cleaning = CleaningThresholds(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"preprocessing.cleaning: {exc}") from exc
    kwargs = {"thresholds": cleaning}
    for name, conv in (
        ("band_low_hz", _as_float),
        ("band_high_hz", _as_float),
        ("target_rate_hz", _as_float),
        ("test_fraction", _as_float),
        ("filter_order", _as_int),
        ("standardize", _as_bool),
    ):
        if name in d:
            kwargs[name] = conv(d.pop(name), f"preprocessing.{name}")
    _no_leftovers(d, "preprocessing")
    try:
        return PipelineSettings(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"preprocessing: {exc}") from exc


def _parse_training(obj, ctx: str) -> dict:
    """Partial hyperparameter override block; unknown names rejected."""
    if obj is None:
        return {}
    d = _expect_mapping(obj, ctx)
    out = {}
    for name in _HP_FIELDS:
        if name not in d:
            continue
        value = d.pop(name)
        if name in ("batch_size", "n_epochs"):
            out[name] = _as_int(value, f"{ctx}.{name}")
        elif name == "max_norm":
            out[name] = None if value is None else _as_float(value, f"{ctx}.{name}")
        else:
            out[name] = _as_float(value, f"{ctx}.{name}")
    _no_leftovers(d, ctx)
    return out


def _parse_stats(obj) -> StatsSettings:
    if obj is None:
        return StatsSettings()
    d = _expect_mapping(obj, "stats")
    kwargs = {}
    if "n_permutations" in d:
        kwargs["n_permutations"] = _as_int(d.pop("n_permutations"), "stats.n_permutations")
    if "alpha" in d:
        kwargs["alpha"] = _as_float(d.pop("alpha"), "stats.alpha")
    if "enumeration_cap" in d:
        kwargs["enumeration_cap"] = _as_int(d.pop("enumeration_cap"), "stats.enumeration_cap")
    _no_leftovers(d, "stats")
    settings = StatsSettings(**kwargs)
    if settings.n_permutations < 1:
        raise ConfigError("stats.n_permutations must be >= 1")
    if not 0 < settings.alpha < 1:
        raise ConfigError("stats.alpha must lie in (0, 1)")
    if settings.enumeration_cap < 0:
        raise ConfigError("stats.enumeration_cap must be >= 0")
    return settings


def parse_config(obj) -> ComparisonConfig:
    """Validate a decoded JSON object into a ComparisonConfig."""
    d = _expect_mapping(obj, "config")
    examples_obj = d.pop("examples", None)
    if not isinstance(examples_obj, list) or not examples_obj:
        raise ConfigError("config.examples must be a non-empty list")
    examples = tuple(
        _parse_example(e, f"examples[{i}]") for i, e in enumerate(examples_obj)
    )
    seen = set()
    for ex in examples:
        if ex.id in seen:
            raise ConfigError(f"duplicate example id {ex.id!r}")
        seen.add(ex.id)

    if "architectures" in d:
        arch_obj = d.pop("architectures")
        if not isinstance(arch_obj, list) or not arch_obj:
            raise ConfigError("config.architectures must be a non-empty list")
        archs = tuple(_as_str(a, f"architectures[{i}]") for i, a in enumerate(arch_obj))
        for a in archs:
            if a not in ARCHITECTURES:
                known = ", ".join(sorted(ARCHITECTURES))
                raise ConfigError(f"unknown architecture {a!r}; known: {known}")
        if len(set(archs)) != len(archs):
            raise ConfigError("duplicate architecture ids")
    else:
        archs = tuple(sorted(ARCHITECTURES))

    master_seed = 0
    if "master_seed" in d:
        master_seed = _as_int(d.pop("master_seed"), "config.master_seed")
        if not 0 <= master_seed < 2 ** 64:
            raise ConfigError("config.master_seed must be an unsigned 64-bit integer")

    output_dir = None
    if "output_dir" in d:
        value = d.pop("output_dir")
        output_dir = None if value is None else _as_str(value, "config.output_dir")

    workers = 1
    if "workers" in d:
        workers = _as_int(d.pop("workers"), "config.workers")
        if workers < 1:
            raise ConfigError("config.workers must be >= 1")

    preprocessing = _parse_preprocessing(d.pop("preprocessing", None))
    base_training = _parse_training(d.pop("training", None), "training")
    try:
        training = TrainingSettings(**base_training)
        training.hyperparameters(seed=0)
    except ValueError as exc:
        raise ConfigError(f"training: {exc}") from exc

    per_arch: dict = {}
    if "per_architecture" in d:
        pa = _expect_mapping(d.pop("per_architecture"), "per_architecture")
        for arch, override in pa.items():
            if arch not in archs:
                raise ConfigError(
                    f"per_architecture references {arch!r}, which is not in architectures"
                )
            per_arch[arch] = _parse_training(override, f"per_architecture.{arch}")
    stats = _parse_stats(d.pop("stats", None))
    _no_leftovers(d, "config")

    config = ComparisonConfig(
        examples=examples,
        architectures=archs,
        master_seed=master_seed,
        output_dir=output_dir,
        workers=workers,
        preprocessing=preprocessing,
        training=training,
        per_architecture=per_arch,
        stats=stats,
    )
    for arch in archs:
        try:
            config.training_for(arch).hyperparameters(seed=0)
        except ValueError as exc:
            raise ConfigError(f"per_architecture.{arch}: {exc}") from exc
    return config


def load_config(path) -> ComparisonConfig:
    """Read and validate a JSON config file."""
    try:
        obj = read_json(path)
    except DataFormatError as exc:
        raise ConfigError(str(exc)) from exc
    return parse_config(obj)
