"""Continuous-signal conditioning and the fixed preprocessing pipeline.

Order is part of the contract: bandpass filter, downsample, chronological
split, broken-channel detection on the training segment only, channel mask
applied to both segments, epoching, artifact rejection on training trials
only, and optional per-channel standardization using training statistics.
Thresholds compare strictly: a channel is broken only when its exceedance
fraction is strictly above `broken_fraction`, and a trial is rejected only
when some absolute sample is strictly above `amplitude_uv`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .eegdata import EpochWindow, Recording, TrialSet, epoch_trials
from .errors import PipelineError

DEFAULT_BAND_HZ = (0.5, 120.0)
DEFAULT_TARGET_RATE_HZ = 250.0
DEFAULT_TEST_FRACTION = 0.2
FILTER_ORDER = 3
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class CleaningThresholds:
    """Amplitude criterion shared by channel marking and trial rejection."""

    amplitude_uv: float = 800.0
    broken_fraction: float = 0.2

    def __post_init__(self):
        if not self.amplitude_uv > 0:
            raise ValueError(f"amplitude threshold must be positive, got {self.amplitude_uv}")
        if not 0.0 < self.broken_fraction < 1.0:
            raise ValueError(
                f"broken fraction must lie in (0, 1), got {self.broken_fraction}"
            )


@dataclass(frozen=True)
class ChannelMask:
    """Partition of channel indices into kept and removed."""

    kept: tuple[int, ...]
    removed: tuple[int, ...]

    def __post_init__(self):
        kept, removed = tuple(self.kept), tuple(self.removed)
        both = sorted(kept + removed)
        if both != list(range(len(both))):
            raise ValueError(
                f"kept {kept} and removed {removed} must partition 0..{len(both) - 1}"
            )
        if not kept:
            raise ValueError("a channel mask must keep at least one channel")
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "removed", removed)

    @property
    def n_channels(self) -> int:
        return len(self.kept) + len(self.removed)


@dataclass(frozen=True)
class SplitResult:
    """Chronological split with the straddling-event drop count."""

    train: Recording
    test: Recording
    split_sample: int
    n_dropped_events: int


@dataclass(frozen=True)
class ChannelStats:
    """Training-side per-channel mean and floored standard deviation."""

    mean: np.ndarray
    std: np.ndarray
    floored: tuple[int, ...]


def bandpass_filter(rec: Recording, low_hz: float, high_hz: float,
                    order: int = FILTER_ORDER) -> Recording:
    """Zero-phase Butterworth bandpass via one forward and one backward pass."""
    nyquist = rec.sampling_rate_hz / 2.0
    if not 0.0 < low_hz < high_hz:
        raise PipelineError(f"band edges must satisfy 0 < low < high, got "
                            f"({low_hz}, {high_hz})")
    if high_hz >= nyquist:
        raise PipelineError(
            f"high edge {high_hz} Hz must stay below the Nyquist rate "
            f"{nyquist} Hz of a {rec.sampling_rate_hz} Hz recording"
        )
    sos = butter(order, [low_hz, high_hz], btype="bandpass",
                 fs=rec.sampling_rate_hz, output="sos")
    filtered = sosfiltfilt(sos, rec.samples.astype(np.float64), axis=1)
    return replace(rec, samples=filtered.astype(np.float32))


def downsample(rec: Recording, target_rate_hz: float) -> Recording:
    """Keep every k-th sample; event indices divide by k, rounding down."""
    if not target_rate_hz > 0:
        raise PipelineError(f"target rate must be positive, got {target_rate_hz}")
    ratio = rec.sampling_rate_hz / target_rate_hz
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise PipelineError(
            f"sampling rate {rec.sampling_rate_hz} Hz is not an integer multiple "
            f"of the target {target_rate_hz} Hz"
        )
    samples = rec.samples[:, ::k]
    events = tuple(
        replace(ev, sample_index=ev.sample_index // k) for ev in rec.events
    )
    return Recording(
        subject_id=rec.subject_id,
        paradigm=rec.paradigm,
        sampling_rate_hz=float(target_rate_hz),
        channel_names=rec.channel_names,
        samples=samples,
        events=events,
    )


def split_train_test(rec: Recording, test_fraction: float,
                     window: EpochWindow) -> SplitResult:
    """Chronological split at floor((1 - test_fraction) * n_samples).

    An event goes to the side that contains its whole epoch window; events
    whose window straddles the boundary or leaves the recording are dropped
    and counted.
    """
    if not 0.0 < test_fraction < 1.0:
        raise PipelineError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n = rec.n_samples
    split = int(np.floor((1.0 - test_fraction) * n))
    if split < 1 or split >= n:
        raise PipelineError(
            f"split at sample {split} of {n} leaves an empty side"
        )
    s0 = window.start_sample(rec.sampling_rate_hz)
    length = window.length_samples(rec.sampling_rate_hz)
    train_events, test_events = [], []
    dropped = 0
    for ev in rec.events:
        a = ev.sample_index + s0
        b = a + length
        if a >= 0 and b <= split:
            train_events.append(ev)
        elif a >= split and b <= n:
            test_events.append(replace(ev, sample_index=ev.sample_index - split))
        else:
            dropped += 1
    train = Recording(
        subject_id=rec.subject_id,
        paradigm=rec.paradigm,
        sampling_rate_hz=rec.sampling_rate_hz,
        channel_names=rec.channel_names,
        samples=rec.samples[:, :split],
        events=tuple(train_events),
    )
    test = Recording(
        subject_id=rec.subject_id,
        paradigm=rec.paradigm,
        sampling_rate_hz=rec.sampling_rate_hz,
        channel_names=rec.channel_names,
        samples=rec.samples[:, split:],
        events=tuple(test_events),
    )
    return SplitResult(train=train, test=test, split_sample=split,
                       n_dropped_events=dropped)


def mark_broken_channels(rec: Recording, thresholds: CleaningThresholds) -> ChannelMask:
    """Mark channels whose exceedance fraction is strictly above the cutoff."""
    exceed = np.abs(rec.samples) > thresholds.amplitude_uv
    fraction = exceed.mean(axis=1)
    removed = tuple(int(c) for c in np.nonzero(fraction > thresholds.broken_fraction)[0])
    kept = tuple(c for c in range(rec.n_channels) if c not in removed)
    if not kept:
        raise PipelineError(
            f"all {rec.n_channels} channels exceed {thresholds.amplitude_uv} uV on "
            f"more than {thresholds.broken_fraction:.0%} of samples"
        )
    return ChannelMask(kept=kept, removed=removed)


def apply_channel_mask(rec: Recording, mask: ChannelMask) -> Recording:
    """Drop removed channels, preserving the relative order of kept ones."""
    if mask.n_channels != rec.n_channels:
        raise PipelineError(
            f"mask covers {mask.n_channels} channels, recording has {rec.n_channels}"
        )
    kept = list(mask.kept)
    return Recording(
        subject_id=rec.subject_id,
        paradigm=rec.paradigm,
        sampling_rate_hz=rec.sampling_rate_hz,
        channel_names=tuple(rec.channel_names[c] for c in kept),
        samples=rec.samples[kept],
        events=rec.events,
    )


def reject_artifact_trials(trials: TrialSet, thresholds: CleaningThresholds):
    """Drop trials with any |sample| strictly above the amplitude threshold.

    Returns (kept trials, tuple of rejected trial indices).
    """
    hot = np.abs(trials.data) > thresholds.amplitude_uv
    rejected = np.nonzero(hot.any(axis=(1, 2)))[0]
    if rejected.size == trials.n_trials:
        raise PipelineError(
            f"all {trials.n_trials} trials exceed {thresholds.amplitude_uv} uV"
        )
    if rejected.size == 0:
        return trials, ()
    keep = np.setdiff1d(np.arange(trials.n_trials), rejected)
    kept = TrialSet(
        data=trials.data[keep],
        labels=trials.labels[keep],
        sampling_rate_hz=trials.sampling_rate_hz,
        channel_names=trials.channel_names,
        n_classes=trials.n_classes,
    )
    return kept, tuple(int(i) for i in rejected)


def standardize(train: TrialSet, test: TrialSet, floor: float = STD_FLOOR):
    """Per-channel zero-mean unit-variance transform from training statistics.

    Both sets get the same transform. Channel standard deviations below the
    floor are clamped so constant channels pass through as zeros instead of
    dividing by zero. Returns (train, test, ChannelStats).
    """
    if train.n_channels != test.n_channels:
        raise PipelineError(
            f"train has {train.n_channels} channels, test has {test.n_channels}"
        )
    mean = train.data.mean(axis=(0, 2), dtype=np.float64)
    centered = train.data - mean.astype(np.float32)[None, :, None]
    var = np.mean(np.square(centered), axis=(0, 2), dtype=np.float64)
    std = np.sqrt(var)
    floored = tuple(int(c) for c in np.nonzero(std < floor)[0])
    std_used = np.maximum(std, floor)

    def apply(ts: TrialSet) -> TrialSet:
        scaled = (ts.data - mean.astype(np.float32)[None, :, None]) \
            / std_used.astype(np.float32)[None, :, None]
        return TrialSet(
            data=scaled,
            labels=ts.labels,
            sampling_rate_hz=ts.sampling_rate_hz,
            channel_names=ts.channel_names,
            n_classes=ts.n_classes,
        )

    return apply(train), apply(test), ChannelStats(mean=mean, std=std_used,
                                                   floored=floored)


@dataclass(frozen=True)
class PipelineSettings:
    """Knobs for the fixed pipeline; defaults mirror the standard protocol."""

    band_low_hz: float = DEFAULT_BAND_HZ[0]
    band_high_hz: float = DEFAULT_BAND_HZ[1]
    target_rate_hz: float = DEFAULT_TARGET_RATE_HZ
    test_fraction: float = DEFAULT_TEST_FRACTION
    thresholds: CleaningThresholds = CleaningThresholds()
    standardize: bool = True
    filter_order: int = FILTER_ORDER

    def __post_init__(self):
        if not 0.0 < self.band_low_hz < self.band_high_hz:
            raise ValueError(
                f"band edges must satisfy 0 < low < high, got "
                f"({self.band_low_hz}, {self.band_high_hz})"
            )
        if not self.target_rate_hz > 0:
            raise ValueError(f"target rate must be positive, got {self.target_rate_hz}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(
                f"test fraction must lie in (0, 1), got {self.test_fraction}"
            )
        if self.filter_order < 1:
            raise ValueError(f"filter order must be >= 1, got {self.filter_order}")


@dataclass(frozen=True)
class PipelineResult:
    """Final train/test trial sets plus a step-by-step provenance record."""

    train: TrialSet
    test: TrialSet
    provenance: dict


def run_pipeline(rec: Recording, window: EpochWindow, settings: PipelineSettings,
                 n_classes: int) -> PipelineResult:
    """Run the full fixed-order pipeline on one recording."""
    filtered = bandpass_filter(rec, settings.band_low_hz, settings.band_high_hz,
                               settings.filter_order)
    down = downsample(filtered, settings.target_rate_hz)
    split = split_train_test(down, settings.test_fraction, window)
    mask = mark_broken_channels(split.train, settings.thresholds)
    train_rec = apply_channel_mask(split.train, mask)
    test_rec = apply_channel_mask(split.test, mask)
    train_all, train_oob = epoch_trials(train_rec, window, n_classes)
    test_trials, test_oob = epoch_trials(test_rec, window, n_classes)
    train_trials, rejected = reject_artifact_trials(train_all, settings.thresholds)
    if np.unique(train_trials.labels).size < 2:
        raise PipelineError("training segment retains fewer than two classes")
    floored: tuple[int, ...] = ()
    if settings.standardize:
        train_trials, test_trials, stats = standardize(train_trials, test_trials)
        floored = stats.floored
    provenance = {
        "band_hz": [settings.band_low_hz, settings.band_high_hz],
        "filter_order": settings.filter_order,
        "source_rate_hz": rec.sampling_rate_hz,
        "target_rate_hz": settings.target_rate_hz,
        "split_sample": split.split_sample,
        "n_events_dropped_at_split": split.n_dropped_events,
        "removed_channels": [rec.channel_names[c] for c in mask.removed],
        "n_channels_kept": len(mask.kept),
        "n_train_epochs_out_of_bounds": train_oob,
        "n_test_epochs_out_of_bounds": test_oob,
        "rejected_train_trials": [int(i) for i in rejected],
        "n_train_trials": train_trials.n_trials,
        "n_test_trials": test_trials.n_trials,
        "standardized": settings.standardize,
        "floored_channels": list(floored),
    }
    return PipelineResult(train=train_trials, test=test_trials, provenance=provenance)
