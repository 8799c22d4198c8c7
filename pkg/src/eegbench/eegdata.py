"""Recordings, trial sets, container I/O, epoching, and synthetic paradigms.

In-memory convention: continuous data is a float32 (channels x time) array
in microvolts; epoched data is (trials x channels x time). The on-disk
container is a directory holding `meta.json` (subject, paradigm, rate,
channel names, events) and `data.f32le` (raw little-endian float32,
time-major interleaved frames). Arrays inside Recording and TrialSet are
locked read-only; every transformation builds a new object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, EpochingError, GenerationError
from .jsonutil import read_json, write_canonical_json

META_FILENAME = "meta.json"
DATA_FILENAME = "data.f32le"
CONTAINER_VERSION = 1
_SAMPLE_DTYPE = np.dtype("<f4")

NOISE_RMS_UV = 10.0
BROKEN_CHANNEL_SD_UV = 2000.0
ARTIFACT_PEAK_UV = 1500.0
ARTIFACT_FREQ_HZ = 25.0
CARRIER_BAND_HZ = (8.0, 30.0)


def _round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _lock(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EventMarker:
    """A labeled time point, in samples from the start of the recording."""

    sample_index: int
    label: int

    def __post_init__(self):
        if self.sample_index < 0:
            raise ValueError(f"event sample index must be >= 0, got {self.sample_index}")
        if self.label < 0:
            raise ValueError(f"event label must be >= 0, got {self.label}")


@dataclass(frozen=True)
class EpochWindow:
    """Trial window relative to an event, in seconds; the end is exclusive."""

    start_offset_s: float
    end_offset_s: float

    def __post_init__(self):
        if not math.isfinite(self.start_offset_s) or not math.isfinite(self.end_offset_s):
            raise ValueError("window offsets must be finite")
        if self.end_offset_s <= self.start_offset_s:
            raise ValueError(
                f"window end {self.end_offset_s} must exceed start {self.start_offset_s}"
            )

    def start_sample(self, rate_hz: float) -> int:
        return _round_half_away(self.start_offset_s * rate_hz)

    def length_samples(self, rate_hz: float) -> int:
        return _round_half_away((self.end_offset_s - self.start_offset_s) * rate_hz)

    def to_dict(self) -> dict:
        return {"start_offset_s": self.start_offset_s, "end_offset_s": self.end_offset_s}

    @classmethod
    def from_dict(cls, d: dict) -> "EpochWindow":
        if not isinstance(d, dict) or set(d) != {"start_offset_s", "end_offset_s"}:
            raise ValueError(
                "window must be an object with exactly start_offset_s and end_offset_s"
            )
        return cls(float(d["start_offset_s"]), float(d["end_offset_s"]))


@dataclass(frozen=True, eq=False)
class Recording:
    """A continuous multichannel recording with event markers, in microvolts."""

    subject_id: str
    paradigm: str
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    samples: np.ndarray
    events: tuple[EventMarker, ...]

    def __post_init__(self):
        if not self.subject_id or not self.paradigm:
            raise ValueError("subject_id and paradigm must be non-empty")
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        names = tuple(self.channel_names)
        if not names or len(set(names)) != len(names):
            raise ValueError("channel names must be non-empty and unique")
        samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if samples.ndim != 2:
            raise ValueError(f"samples must be (channels, time), got {samples.shape}")
        if samples.shape[0] != len(names):
            raise ValueError(
                f"{samples.shape[0]} sample rows for {len(names)} channel names"
            )
        if samples.shape[1] < 1:
            raise ValueError("a recording needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        events = tuple(self.events)
        last = -1
        for ev in events:
            if not isinstance(ev, EventMarker):
                raise ValueError(f"events must be EventMarker, got {type(ev).__name__}")
            if ev.sample_index < last:
                raise ValueError("events must be sorted by sample index")
            if ev.sample_index >= samples.shape[1]:
                raise ValueError(
                    f"event at sample {ev.sample_index} beyond recording "
                    f"length {samples.shape[1]}"
                )
            last = ev.sample_index
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "samples", _lock(samples))
        object.__setattr__(self, "events", events)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz


@dataclass(frozen=True, eq=False)
class TrialSet:
    """Epoched trials (trials x channels x time) with integer class labels."""

    data: np.ndarray
    labels: np.ndarray
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    n_classes: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if data.ndim != 3:
            raise ValueError(f"trial data must be (trials, channels, time), got {data.shape}")
        if labels.shape != (data.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match {data.shape[0]} trials"
            )
        if data.shape[0] < 1:
            raise ValueError("a trial set needs at least one trial")
        names = tuple(self.channel_names)
        if len(names) != data.shape[1]:
            raise ValueError(
                f"{data.shape[1]} channels in data for {len(names)} channel names"
            )
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be >= 1, got {self.n_classes}")
        if not np.all(np.isfinite(data)):
            raise ValueError("trial data contains non-finite values")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(
                f"labels must lie in [0, {self.n_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "data", _lock(data))
        object.__setattr__(self, "labels", _lock(labels))
        object.__setattr__(self, "channel_names", names)

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DatasetSummary:
    """Shape and class-balance digest of a trial set."""

    n_trials: int
    n_channels: int
    n_samples: int
    sampling_rate_hz: float
    class_counts: tuple[int, ...]
    imbalance_ratio: float | None

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "n_channels": self.n_channels,
            "n_samples": self.n_samples,
            "sampling_rate_hz": self.sampling_rate_hz,
            "class_counts": list(self.class_counts),
            "imbalance_ratio": self.imbalance_ratio,
        }


def dataset_summary(trials: TrialSet) -> DatasetSummary:
    """Per-class counts plus the max/min ratio over classes that appear.

    The ratio is None when fewer than two classes appear, rather than a
    division by zero.
    """
    counts = np.bincount(trials.labels, minlength=trials.n_classes)
    present = counts[counts > 0]
    ratio = float(present.max() / present.min()) if present.size >= 2 else None
    return DatasetSummary(
        n_trials=trials.n_trials,
        n_channels=trials.n_channels,
        n_samples=trials.n_samples,
        sampling_rate_hz=trials.sampling_rate_hz,
        class_counts=tuple(int(c) for c in counts),
        imbalance_ratio=ratio,
    )


# -- container I/O ------------------------------------------------------------

_META_KEYS = {
    "format_version", "subject_id", "paradigm", "sampling_rate_hz",
    "channels", "n_samples", "events",
}


def save_recording(rec: Recording, directory) -> None:
    """Write the two-file container; meta.json is canonical JSON."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CONTAINER_VERSION,
        "subject_id": rec.subject_id,
        "paradigm": rec.paradigm,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "channels": list(rec.channel_names),
        "n_samples": rec.n_samples,
        "events": [
            {"sample_index": ev.sample_index, "label": ev.label} for ev in rec.events
        ],
    }
    write_canonical_json(directory / META_FILENAME, meta)
    frames = np.ascontiguousarray(rec.samples.T, dtype=_SAMPLE_DTYPE)
    (directory / DATA_FILENAME).write_bytes(frames.tobytes())


def load_recording(directory) -> Recording:
    """Read a container directory back into a Recording."""
    directory = Path(directory)
    meta = read_json(directory / META_FILENAME)
    if not isinstance(meta, dict):
        raise DataFormatError(f"{directory / META_FILENAME}: expected a JSON object")
    missing = _META_KEYS - meta.keys()
    unknown = meta.keys() - _META_KEYS
    if missing or unknown:
        raise DataFormatError(
            f"{directory / META_FILENAME}: missing keys {sorted(missing)}, "
            f"unknown keys {sorted(unknown)}"
        )
    if meta["format_version"] != CONTAINER_VERSION:
        raise DataFormatError(
            f"unsupported container version {meta['format_version']!r}"
        )
    channels = meta["channels"]
    n_samples = meta["n_samples"]
    if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
        raise DataFormatError("channels must be a list of names")
    if not isinstance(n_samples, int) or n_samples < 1:
        raise DataFormatError(f"n_samples must be a positive integer, got {n_samples!r}")
    data_path = directory / DATA_FILENAME
    if not data_path.is_file():
        raise DataFormatError(f"missing data file: {data_path}")
    expected = len(channels) * n_samples * _SAMPLE_DTYPE.itemsize
    blob = data_path.read_bytes()
    if len(blob) != expected:
        raise DataFormatError(
            f"{data_path}: expected {expected} bytes "
            f"({len(channels)} channels x {n_samples} samples), found {len(blob)}"
        )
    frames = np.frombuffer(blob, dtype=_SAMPLE_DTYPE).reshape(n_samples, len(channels))
    try:
        events = tuple(
            EventMarker(int(ev["sample_index"]), int(ev["label"]))
            for ev in meta["events"]
        )
        return Recording(
            subject_id=meta["subject_id"],
            paradigm=meta["paradigm"],
            sampling_rate_hz=float(meta["sampling_rate_hz"]),
            channel_names=tuple(channels),
            samples=frames.T,
            events=events,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid container at {directory}: {exc}") from exc


# -- epoching ------------------------------------------------------------------

def epoch_trials(rec: Recording, window: EpochWindow, n_classes=None):
    """Cut one trial per event; returns (TrialSet, n_dropped).

    Events whose window leaves the recording are dropped and counted, so
    kept trials plus dropped events always add up to the event count.
    """
    rate = rec.sampling_rate_hz
    s0 = window.start_sample(rate)
    length = window.length_samples(rate)
    if length < 1:
        raise EpochingError(
            f"window {window} collapses to zero samples at {rate} Hz"
        )
    if length > rec.n_samples:
        raise EpochingError(
            f"window of {length} samples exceeds recording length {rec.n_samples}"
        )
    if not rec.events:
        raise EpochingError("recording has no events to epoch")
    if n_classes is None:
        n_classes = max(ev.label for ev in rec.events) + 1
    bad = [ev.label for ev in rec.events if ev.label >= n_classes]
    if bad:
        raise EpochingError(f"event labels {sorted(set(bad))} outside [0, {n_classes})")
    slices, labels = [], []
    dropped = 0
    for ev in rec.events:
        a = ev.sample_index + s0
        b = a + length
        if a < 0 or b > rec.n_samples:
            dropped += 1
            continue
        slices.append(rec.samples[:, a:b])
        labels.append(ev.label)
    if not slices:
        raise EpochingError(
            f"no event survived epoching ({dropped} of {len(rec.events)} dropped)"
        )
    trials = TrialSet(
        data=np.stack(slices),
        labels=np.asarray(labels, dtype=np.int64),
        sampling_rate_hz=rate,
        channel_names=rec.channel_names,
        n_classes=int(n_classes),
    )
    return trials, dropped


# -- synthetic paradigms --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic classification recording.

    Class k rides on its own sinusoidal carrier, injected into a fixed
    per-class channel subset during each trial window. Broken channels are
    replaced by high-amplitude noise; artifact bursts are in-band spikes
    placed inside randomly chosen trial windows.
    """

    n_classes: int
    n_channels: int
    source_rate_hz: float
    n_trials: int
    window: EpochWindow
    snr: float
    class_balance: tuple[float, ...] | None = None
    artifact_rate: float = 0.0
    broken_channel_count: int = 0
    inter_trial_gap_s: float = 0.5
    paradigm: str = "synthetic"
    subject_id: str = "synthetic"

    def __post_init__(self):
        if self.n_classes < 2:
            raise GenerationError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_channels < 1:
            raise GenerationError(f"need at least 1 channel, got {self.n_channels}")
        if not self.source_rate_hz > 0:
            raise GenerationError(f"source rate must be positive, got {self.source_rate_hz}")
        if self.n_trials < self.n_classes:
            raise GenerationError(
                f"{self.n_trials} trials cannot cover {self.n_classes} classes"
            )
        if self.snr < 0:
            raise GenerationError(f"snr must be >= 0, got {self.snr}")
        if not 0.0 <= self.artifact_rate <= 1.0:
            raise GenerationError(f"artifact rate must be in [0, 1], got {self.artifact_rate}")
        if not 0 <= self.broken_channel_count < self.n_channels:
            raise GenerationError(
                f"broken channel count {self.broken_channel_count} must stay below "
                f"the channel count {self.n_channels}"
            )
        if self.inter_trial_gap_s < 0:
            raise GenerationError(f"gap must be >= 0, got {self.inter_trial_gap_s}")
        if self.class_balance is not None:
            balance = tuple(float(v) for v in self.class_balance)
            if len(balance) != self.n_classes:
                raise GenerationError(
                    f"class balance has {len(balance)} entries for "
                    f"{self.n_classes} classes"
                )
            if any(v <= 0 for v in balance):
                raise GenerationError("class balance weights must be positive")
            object.__setattr__(self, "class_balance", balance)
        if self.window.length_samples(self.source_rate_hz) < 2:
            raise GenerationError(
                f"window {self.window} is too short at {self.source_rate_hz} Hz"
            )

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_channels": self.n_channels,
            "source_rate_hz": self.source_rate_hz,
            "n_trials": self.n_trials,
            "window": self.window.to_dict(),
            "snr": self.snr,
            "class_balance": None if self.class_balance is None else list(self.class_balance),
            "artifact_rate": self.artifact_rate,
            "broken_channel_count": self.broken_channel_count,
            "inter_trial_gap_s": self.inter_trial_gap_s,
            "paradigm": self.paradigm,
            "subject_id": self.subject_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        if not isinstance(d, dict):
            raise GenerationError(f"synthetic spec must be an object, got {type(d).__name__}")
        required = {"n_classes", "n_channels", "source_rate_hz", "n_trials", "window", "snr"}
        optional = {
            "class_balance", "artifact_rate", "broken_channel_count",
            "inter_trial_gap_s", "paradigm", "subject_id",
        }
        missing = required - d.keys()
        unknown = d.keys() - required - optional
        if missing or unknown:
            raise GenerationError(
                f"synthetic spec: missing keys {sorted(missing)}, "
                f"unknown keys {sorted(unknown)}"
            )
        kwargs = dict(d)
        try:
            kwargs["window"] = EpochWindow.from_dict(d["window"])
        except ValueError as exc:
            raise GenerationError(str(exc)) from exc
        if kwargs.get("class_balance") is not None:
            kwargs["class_balance"] = tuple(kwargs["class_balance"])
        return cls(**kwargs)


def _apportion(n: int, weights: tuple[float, ...]) -> np.ndarray:
    """Largest-remainder apportionment of n items over weights."""
    total = float(sum(weights))
    raw = np.asarray([w / total * n for w in weights])
    base = np.floor(raw).astype(np.int64)
    short = n - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def class_channels(n_channels: int, n_classes: int) -> list[np.ndarray]:
    """Fixed per-class channel subsets: ceil(C/4) channels per class."""
    m = max(1, math.ceil(n_channels / 4))
    return [
        np.array([(k * m + j) % n_channels for j in range(m)], dtype=np.int64)
        for k in range(n_classes)
    ]


def carrier_frequencies(n_classes: int) -> np.ndarray:
    """Distinct in-band carrier frequencies, one per class."""
    lo, hi = CARRIER_BAND_HZ
    return lo + (hi - lo) * np.arange(n_classes) / max(1, n_classes - 1)


def _pink_noise(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    """1/f-shaped noise, RMS exactly NOISE_RMS_UV."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    spec *= 1.0 / np.sqrt(np.maximum(freqs, 1.0))
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(np.square(x)))
    return x * (NOISE_RMS_UV / rms)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Recording:
    """Deterministic synthetic recording; a pure function of (spec, seed)."""
    rng = np.random.default_rng(seed)
    rate = spec.source_rate_hz
    s0 = spec.window.start_sample(rate)
    length = spec.window.length_samples(rate)
    gap = _round_half_away(spec.inter_trial_gap_s * rate)
    lead = gap + max(0, s0)
    starts = lead + np.arange(spec.n_trials, dtype=np.int64) * (length + gap)
    events_at = starts - s0
    n_samples = int(max(starts[-1] + length, events_at[-1] + 1) + gap)

    samples = np.empty((spec.n_channels, n_samples))
    for c in range(spec.n_channels):
        samples[c] = _pink_noise(rng, n_samples, rate)

    subsets = class_channels(spec.n_channels, spec.n_classes)
    used = sorted({int(c) for sub in subsets for c in sub})
    free = [c for c in range(spec.n_channels) if c not in used]
    pool = free if len(free) >= spec.broken_channel_count else list(range(spec.n_channels))
    broken = np.sort(
        rng.choice(np.asarray(pool, dtype=np.int64), size=spec.broken_channel_count,
                   replace=False)
    ) if spec.broken_channel_count else np.empty(0, dtype=np.int64)
    for c in broken:
        samples[c] = rng.normal(0.0, BROKEN_CHANNEL_SD_UV, n_samples)

    weights = spec.class_balance or tuple([1.0] * spec.n_classes)
    counts = _apportion(spec.n_trials, weights)
    if counts.min() < 1:
        raise GenerationError(
            f"class balance {weights} leaves a class empty over {spec.n_trials} trials"
        )
    labels = rng.permutation(np.repeat(np.arange(spec.n_classes), counts))

    freqs = carrier_frequencies(spec.n_classes)
    amplitude = math.sqrt(2.0 * spec.snr) * NOISE_RMS_UV
    t_rel = np.arange(length) / rate
    ramp = max(1, _round_half_away(0.05 * length))
    envelope = np.ones(length)
    rise = 0.5 * (1.0 - np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp))
    envelope[:ramp] = rise
    envelope[length - ramp:] = rise[::-1]
    phases = rng.uniform(0.0, 2.0 * np.pi, spec.n_trials)
    flagged = rng.random(spec.n_trials) < spec.artifact_rate

    burst_len = min(length, max(2, _round_half_away(0.12 * rate)))
    healthy = np.asarray(
        [c for c in range(spec.n_channels) if c not in set(int(b) for b in broken)],
        dtype=np.int64,
    )
    for i in range(spec.n_trials):
        k = int(labels[i])
        a = starts[i]
        carrier = amplitude * np.sin(2.0 * np.pi * freqs[k] * t_rel + phases[i]) * envelope
        samples[subsets[k], a : a + length] += carrier
        if flagged[i]:
            ch = int(healthy[rng.integers(len(healthy))])
            margin = (length - burst_len) // 4
            off = int(rng.integers(margin, length - burst_len - margin + 1))
            tau = np.arange(burst_len) / rate
            burst = np.sin(2.0 * np.pi * ARTIFACT_FREQ_HZ * tau) * np.hanning(burst_len)
            burst *= ARTIFACT_PEAK_UV / np.max(np.abs(burst))
            samples[ch, a + off : a + off + burst_len] += burst

    events = tuple(
        EventMarker(int(events_at[i]), int(labels[i])) for i in range(spec.n_trials)
    )
    return Recording(
        subject_id=spec.subject_id,
        paradigm=spec.paradigm,
        sampling_rate_hz=rate,
        channel_names=tuple(f"ch{c:02d}" for c in range(spec.n_channels)),
        samples=samples.astype(np.float32),
        events=events,
    )
