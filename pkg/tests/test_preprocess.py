"""Filtering, resampling, splitting, cleaning, and the fixed pipeline."""

import numpy as np
import pytest

from eegbench.eegdata import (
    EpochWindow,
    EventMarker,
    Recording,
    SyntheticSpec,
    TrialSet,
    generate_synthetic,
)
from eegbench.errors import PipelineError
from eegbench.preprocess import (
    ChannelMask,
    CleaningThresholds,
    PipelineSettings,
    apply_channel_mask,
    bandpass_filter,
    downsample,
    mark_broken_channels,
    reject_artifact_trials,
    run_pipeline,
    split_train_test,
    standardize,
)


def sine_recording(freq_hz, rate_hz, duration_s=10.0, amplitude=50.0, dc=0.0):
    t = np.arange(int(duration_s * rate_hz)) / rate_hz
    wave = amplitude * np.sin(2 * np.pi * freq_hz * t) + dc
    return Recording(
        subject_id="s", paradigm="p", sampling_rate_hz=rate_hz,
        channel_names=("c0",), samples=wave[None, :].astype(np.float32),
        events=(EventMarker(0, 0),),
    )


def central_rms(rec):
    n = rec.n_samples
    seg = rec.samples[0, n // 4 : 3 * n // 4].astype(np.float64)
    return float(np.sqrt(np.mean(np.square(seg))))


def test_filter_passband_attenuation_under_one_percent():
    rec = sine_recording(60.0, 250.0)
    out = bandpass_filter(rec, 0.5, 120.0)
    assert central_rms(out) / central_rms(rec) > 0.99


def test_filter_stopband_attenuation_at_least_20db():
    rec = sine_recording(200.0, 1000.0)
    out = bandpass_filter(rec, 0.5, 120.0)
    ratio = central_rms(out) / central_rms(rec)
    assert 20.0 * np.log10(1.0 / ratio) >= 20.0


def test_filter_removes_dc():
    rec = sine_recording(10.0, 250.0, amplitude=0.0, dc=100.0)
    out = bandpass_filter(rec, 0.5, 120.0)
    assert central_rms(out) < 5.0


def test_filter_zero_phase():
    rec = sine_recording(20.0, 250.0)
    out = bandpass_filter(rec, 0.5, 120.0)
    n = rec.n_samples
    mid = slice(n // 4, 3 * n // 4)
    x = rec.samples[0, mid].astype(np.float64)
    y = out.samples[0, mid].astype(np.float64)
    # Gain ~1 and no phase lag make the normalized projection ~1.
    assert np.dot(x, y) / np.dot(x, x) == pytest.approx(1.0, abs=0.01)


def test_filter_preserves_metadata_and_events():
    rec = sine_recording(10.0, 250.0)
    out = bandpass_filter(rec, 0.5, 120.0)
    assert out.events == rec.events
    assert out.channel_names == rec.channel_names
    assert out.sampling_rate_hz == rec.sampling_rate_hz


def test_filter_rejects_bad_edges():
    rec = sine_recording(10.0, 250.0)
    with pytest.raises(PipelineError):
        bandpass_filter(rec, 0.5, 125.0)  # at Nyquist
    with pytest.raises(PipelineError):
        bandpass_filter(rec, 120.0, 0.5)
    with pytest.raises(PipelineError):
        bandpass_filter(rec, 0.0, 40.0)


def test_downsample_decimates_and_rescales_events():
    rng = np.random.default_rng(0)
    samples = rng.normal(0, 10, (2, 1000)).astype(np.float32)
    rec = Recording("s", "p", 1000.0, ("a", "b"), samples,
                    (EventMarker(7, 0), EventMarker(402, 1)))
    out = downsample(rec, 250.0)
    assert out.sampling_rate_hz == 250.0
    assert out.n_samples == 250
    np.testing.assert_array_equal(out.samples, samples[:, ::4])
    assert [e.sample_index for e in out.events] == [1, 100]
    assert [e.label for e in out.events] == [0, 1]


def test_downsample_identity_when_rate_matches():
    rec = sine_recording(10.0, 250.0)
    out = downsample(rec, 250.0)
    np.testing.assert_array_equal(out.samples, rec.samples)


def test_downsample_rejects_non_integer_ratio():
    rec = sine_recording(10.0, 250.0)
    with pytest.raises(PipelineError):
        downsample(rec, 100.0)


def test_split_containment():
    # 100 samples at 10 Hz, window [0, 0.5) -> 5 samples, split at 80.
    samples = np.zeros((1, 100), np.float32)
    events = (EventMarker(10, 0), EventMarker(75, 1), EventMarker(76, 0),
              EventMarker(80, 1), EventMarker(96, 0))
    rec = Recording("s", "p", 10.0, ("c0",), samples, events)
    window = EpochWindow(0.0, 0.5)
    result = split_train_test(rec, 0.2, window)
    assert result.split_sample == 80
    assert [e.sample_index for e in result.train.events] == [10, 75]
    assert [e.sample_index for e in result.test.events] == [0]  # 80 - 80
    assert result.n_dropped_events == 2  # straddler at 76, overrun at 96
    assert result.train.n_samples == 80 and result.test.n_samples == 20


def test_split_respects_negative_window_start():
    samples = np.zeros((1, 100), np.float32)
    events = (EventMarker(1, 0), EventMarker(81, 1))
    rec = Recording("s", "p", 10.0, ("c0",), samples, events)
    window = EpochWindow(-0.2, 0.3)  # starts 2 samples before the event
    result = split_train_test(rec, 0.2, window)
    # Event 1 starts at sample -1: gone. Event 81 starts at 79 < 80: gone.
    assert result.n_dropped_events == 2
    assert not result.train.events and not result.test.events


def test_split_rejects_bad_fraction():
    rec = sine_recording(10.0, 250.0)
    with pytest.raises(PipelineError):
        split_train_test(rec, 0.0, EpochWindow(0.0, 0.1))
    with pytest.raises(PipelineError):
        split_train_test(rec, 1.0, EpochWindow(0.0, 0.1))


def test_mark_broken_exact_fraction_boundary():
    # 100 samples; exceedance on exactly 20% must NOT mark the channel.
    samples = np.zeros((3, 100), np.float32)
    samples[1, :20] = 900.0
    samples[2, :21] = 900.0
    rec = Recording("s", "p", 100.0, ("a", "b", "c"), samples, ())
    mask = mark_broken_channels(rec, CleaningThresholds(800.0, 0.2))
    assert mask.removed == (2,)
    assert mask.kept == (0, 1)


def test_mark_broken_exact_amplitude_boundary():
    # |x| == threshold is not an exceedance; strictly above is.
    samples = np.zeros((2, 10), np.float32)
    samples[0, :] = 800.0
    samples[1, :] = -800.5
    rec = Recording("s", "p", 100.0, ("a", "b"), samples, ())
    mask = mark_broken_channels(rec, CleaningThresholds(800.0, 0.2))
    assert mask.removed == (1,)


def test_mark_broken_all_bad_raises():
    samples = np.full((2, 10), 900.0, np.float32)
    rec = Recording("s", "p", 100.0, ("a", "b"), samples, ())
    with pytest.raises(PipelineError):
        mark_broken_channels(rec, CleaningThresholds(800.0, 0.2))


def test_channel_mask_validation():
    with pytest.raises(ValueError):
        ChannelMask(kept=(0, 2), removed=(3,))  # gap at 1
    with pytest.raises(ValueError):
        ChannelMask(kept=(), removed=(0,))
    mask = ChannelMask(kept=(0, 2), removed=(1,))
    assert mask.n_channels == 3


def test_apply_channel_mask():
    samples = np.arange(12, dtype=np.float32).reshape(3, 4)
    rec = Recording("s", "p", 10.0, ("a", "b", "c"), samples, (EventMarker(1, 0),))
    out = apply_channel_mask(rec, ChannelMask(kept=(0, 2), removed=(1,)))
    assert out.channel_names == ("a", "c")
    np.testing.assert_array_equal(out.samples, samples[[0, 2]])
    assert out.events == rec.events
    with pytest.raises(PipelineError):
        apply_channel_mask(out, ChannelMask(kept=(0, 2), removed=(1,)))


def trials_with_peaks(peaks, n_classes=2):
    n = len(peaks)
    data = np.zeros((n, 2, 8), np.float32)
    for i, p in enumerate(peaks):
        data[i, i % 2, 3] = p
    labels = np.arange(n) % n_classes
    return TrialSet(data=data, labels=labels, sampling_rate_hz=10.0,
                    channel_names=("a", "b"), n_classes=n_classes)


def test_reject_trials_strict_boundary():
    trials = trials_with_peaks([100.0, 800.0, 800.5, -801.0, 50.0])
    kept, rejected = reject_artifact_trials(trials, CleaningThresholds(800.0, 0.2))
    assert rejected == (2, 3)
    assert kept.n_trials == 3
    np.testing.assert_array_equal(kept.labels, trials.labels[[0, 1, 4]])


def test_reject_trials_none_rejected_returns_same():
    trials = trials_with_peaks([1.0, 2.0, 3.0])
    kept, rejected = reject_artifact_trials(trials, CleaningThresholds(800.0, 0.2))
    assert rejected == ()
    assert kept is trials


def test_reject_trials_all_rejected_raises():
    trials = trials_with_peaks([900.0, 900.0])
    with pytest.raises(PipelineError):
        reject_artifact_trials(trials, CleaningThresholds(800.0, 0.2))


def test_standardize_train_statistics():
    rng = np.random.default_rng(3)
    data = rng.normal(5.0, 4.0, (20, 3, 16)).astype(np.float32)
    train = TrialSet(data=data, labels=np.arange(20) % 2, sampling_rate_hz=10.0,
                     channel_names=("a", "b", "c"), n_classes=2)
    test = TrialSet(data=data[:5] + 2.0, labels=np.arange(5) % 2,
                    sampling_rate_hz=10.0, channel_names=("a", "b", "c"),
                    n_classes=2)
    new_train, new_test, stats = standardize(train, test)
    got_mean = new_train.data.astype(np.float64).mean(axis=(0, 2))
    got_var = new_train.data.astype(np.float64).var(axis=(0, 2))
    np.testing.assert_allclose(got_mean, 0.0, atol=1e-5)
    np.testing.assert_allclose(got_var, 1.0, atol=1e-4)
    assert stats.floored == ()
    # The test set uses the training transform, so its shift survives.
    shift = new_test.data.astype(np.float64).mean(axis=(0, 2))
    np.testing.assert_allclose(shift * stats.std,
                               test.data.astype(np.float64).mean(axis=(0, 2))
                               - stats.mean, atol=1e-4)


def test_standardize_floors_constant_channel():
    data = np.zeros((4, 2, 8), np.float32)
    data[:, 1] = 7.0  # constant channel has zero variance
    train = TrialSet(data=data, labels=np.array([0, 1, 0, 1]),
                     sampling_rate_hz=10.0, channel_names=("a", "b"), n_classes=2)
    new_train, new_test, stats = standardize(train, train)
    assert stats.floored == (0, 1)
    np.testing.assert_array_equal(new_train.data, 0.0)


def test_standardize_channel_mismatch():
    a = trials_with_peaks([1.0, 2.0])
    data = np.zeros((2, 3, 8), np.float32)
    b = TrialSet(data=data, labels=np.array([0, 1]), sampling_rate_hz=10.0,
                 channel_names=("a", "b", "c"), n_classes=2)
    with pytest.raises(PipelineError):
        standardize(a, b)


def test_thresholds_validation():
    with pytest.raises(ValueError):
        CleaningThresholds(amplitude_uv=0.0)
    with pytest.raises(ValueError):
        CleaningThresholds(broken_fraction=1.0)


PROVENANCE_KEYS = {
    "band_hz", "filter_order", "source_rate_hz", "target_rate_hz",
    "split_sample", "n_events_dropped_at_split", "removed_channels",
    "n_channels_kept", "n_train_epochs_out_of_bounds",
    "n_test_epochs_out_of_bounds", "rejected_train_trials", "n_train_trials",
    "n_test_trials", "standardized", "floored_channels",
}


def pipeline_recording(seed=0, **kwargs):
    base = dict(
        n_classes=2, n_channels=6, source_rate_hz=500.0, n_trials=30,
        window=EpochWindow(0.0, 1.0), snr=2.0,
    )
    base.update(kwargs)
    return generate_synthetic(SyntheticSpec(**base), seed=seed), base["window"]


def test_run_pipeline_shapes_and_provenance():
    rec, window = pipeline_recording()
    settings = PipelineSettings(target_rate_hz=250.0)
    result = run_pipeline(rec, window, settings, n_classes=2)
    prov = result.provenance
    assert set(prov) == PROVENANCE_KEYS
    assert result.train.sampling_rate_hz == 250.0
    assert result.train.n_samples == 250
    assert result.train.n_channels == prov["n_channels_kept"]
    assert prov["n_train_trials"] == result.train.n_trials
    assert prov["n_test_trials"] == result.test.n_trials
    total = (prov["n_train_trials"] + len(prov["rejected_train_trials"])
             + prov["n_test_trials"] + prov["n_events_dropped_at_split"]
             + prov["n_train_epochs_out_of_bounds"]
             + prov["n_test_epochs_out_of_bounds"])
    assert total == 30
    var = result.train.data.astype(np.float64).var(axis=(0, 2))
    np.testing.assert_allclose(var, 1.0, atol=0.05)


def test_run_pipeline_removes_planted_broken_channels():
    rec, window = pipeline_recording(n_channels=8, broken_channel_count=2,
                                     n_trials=20)
    result = run_pipeline(rec, window, PipelineSettings(target_rate_hz=250.0),
                          n_classes=2)
    assert len(result.provenance["removed_channels"]) == 2
    assert result.train.n_channels == 6


def test_run_pipeline_without_standardize_keeps_scale():
    rec, window = pipeline_recording()
    settings = PipelineSettings(target_rate_hz=250.0, standardize=False)
    result = run_pipeline(rec, window, settings, n_classes=2)
    assert result.provenance["standardized"] is False
    sd = result.train.data.astype(np.float64).std()
    assert 2.0 < sd < 50.0  # microvolt scale, not unit variance


def test_run_pipeline_deterministic():
    rec, window = pipeline_recording()
    settings = PipelineSettings(target_rate_hz=250.0)
    a = run_pipeline(rec, window, settings, n_classes=2)
    b = run_pipeline(rec, window, settings, n_classes=2)
    np.testing.assert_array_equal(a.train.data, b.train.data)
    np.testing.assert_array_equal(a.test.data, b.test.data)
    assert a.provenance == b.provenance
