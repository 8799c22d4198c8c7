"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from eegbench.eegdata import EpochWindow, SyntheticSpec, TrialSet, generate_synthetic


def make_trialset(n=12, c=4, t=32, k=2, seed=0, rate=250.0):
    rng = np.random.default_rng(seed)
    data = rng.normal(0.0, 1.0, (n, c, t)).astype(np.float32)
    labels = (np.arange(n) % k).astype(np.int64)
    return TrialSet(
        data=data,
        labels=labels,
        channel_names=tuple(f"ch{i:02d}" for i in range(c)),
        sampling_rate_hz=rate,
        n_classes=k,
    )


@pytest.fixture
def toy_trials():
    return make_trialset()


@pytest.fixture
def synthetic_recording():
    spec = SyntheticSpec(
        n_classes=2,
        n_channels=4,
        source_rate_hz=500.0,
        n_trials=20,
        window=EpochWindow(0.0, 1.0),
        snr=2.0,
    )
    return generate_synthetic(spec, seed=123)


_ACCEPTANCE_LABELS = {
    "test_criterion_1_gradient_suite": "1 gradient suite",
    "test_criterion_2_shape_parameter_audit": "2 shape/parameter audit",
    "test_criterion_3_statistics_oracles": "3 statistics oracles",
    "test_criterion_4_preprocessing_conformance": "4 preprocessing conformance",
    "test_criterion_5_end_to_end_synthetic_decode": "5 end-to-end synthetic decode",
    "test_criterion_6_chance_level_control": "6 chance-level control",
    "test_criterion_7_reproducibility": "7 reproducibility",
    "test_criterion_8_report_fidelity": "8 report fidelity",
}


def pytest_terminal_summary(terminalreporter):
    """Print one pass/fail line per acceptance criterion."""
    seen = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            name = getattr(report, "nodeid", "").rsplit("::", 1)[-1]
            if name in _ACCEPTANCE_LABELS:
                seen[name] = "PASS" if status == "passed" else "FAIL"
    if not seen:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, label in _ACCEPTANCE_LABELS.items():
        if name in seen:
            terminalreporter.write_line(f"criterion {label}: {seen[name]}")
