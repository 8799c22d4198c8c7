"""Configuration, seed derivation, the runner, verification, and reports."""

import copy
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from eegbench.errors import ConfigError, HarnessError
from eegbench.harness import (
    build_report,
    derive_seed,
    emit_report,
    load_config,
    parse_config,
    run_comparison,
    verify_package,
)
from eegbench.harness.config import HASH_EXEMPT_FIELDS
from eegbench.harness.seeds import (
    generation_seed,
    init_seed,
    permutation_seed,
    train_seed,
)
from eegbench.jsonutil import canonical_dumps, read_json


def base_config_dict():
    return {
        "master_seed": 7,
        "architectures": ["eegnet_v1", "eegnet_v2"],
        "examples": [
            {
                "id": "exa",
                "n_classes": 2,
                "window": {"start_offset_s": 0.0, "end_offset_s": 0.64},
                "source": {
                    "type": "synthetic",
                    "n_channels": 4,
                    "source_rate_hz": 250.0,
                    "n_trials": 40,
                    "snr": 4.0,
                },
            },
            {
                "id": "exb",
                "n_classes": 2,
                "window": {"start_offset_s": 0.0, "end_offset_s": 0.64},
                "source": {
                    "type": "synthetic",
                    "n_channels": 4,
                    "source_rate_hz": 250.0,
                    "n_trials": 40,
                    "snr": 3.0,
                },
            },
        ],
        "preprocessing": {"band_high_hz": 100.0, "target_rate_hz": 250.0},
        "training": {"batch_size": 8, "n_epochs": 2},
        "stats": {"n_permutations": 200},
    }


@pytest.fixture(scope="session")
def fast_package(tmp_path_factory):
    out = tmp_path_factory.mktemp("pkg") / "results"
    config = parse_config(base_config_dict())
    run_comparison(config, out_dir=out)
    return out


# -- config parsing -------------------------------------------------------------


def test_parse_minimal_config_defaults():
    d = {
        "examples": base_config_dict()["examples"][:1],
    }
    config = parse_config(d)
    assert config.architectures == ("deep4", "eegnet_v1", "eegnet_v2", "shallow")
    assert config.master_seed == 0
    resolved = config.resolved_dict()
    assert resolved["stats"]["n_permutations"] == 10_000
    assert resolved["stats"]["alpha"] == 0.05
    assert resolved["training"]["batch_size"] == 64
    assert resolved["training"]["n_epochs"] == 100
    assert resolved["preprocessing"]["band_low_hz"] == 0.5
    assert resolved["preprocessing"]["band_high_hz"] == 120.0
    assert resolved["preprocessing"]["cleaning"]["amplitude_uv"] == 800.0
    assert resolved["preprocessing"]["cleaning"]["broken_fraction"] == 0.2
    assert set(resolved["per_architecture"]) == set(config.architectures)


def test_parse_round_trips_through_resolved():
    config = parse_config(base_config_dict())
    again = parse_config(config.resolved_dict())
    assert again.config_hash() == config.config_hash()


@pytest.mark.parametrize("mutate,message", [
    (lambda d: d.update(extra=1), "unknown field"),
    (lambda d: d["examples"][0].update(extra=1), "unknown field"),
    (lambda d: d["examples"][0]["source"].update(extra=1), "unknown field"),
    (lambda d: d["preprocessing"].update(extra=1), "unknown field"),
    (lambda d: d["training"].update(extra=1), "unknown field"),
    (lambda d: d["stats"].update(extra=1), "unknown field"),
    (lambda d: d.pop("examples"), "examples"),
    (lambda d: d["examples"][0].pop("id"), "id"),
    (lambda d: d["examples"][0].pop("n_classes"), "n_classes"),
    (lambda d: d["examples"][0].pop("window"), "window"),
    (lambda d: d["examples"][0]["source"].pop("type"), "type"),
    (lambda d: d["examples"][0].update(id="bad id"), "must match"),
    (lambda d: d["examples"][0].update(n_classes=1), ">= 2"),
    (lambda d: d.update(architectures=["vgg"]), "unknown architecture"),
    (lambda d: d.update(architectures=[]), "non-empty"),
    (lambda d: d.update(master_seed=-1), "64-bit"),
    (lambda d: d.update(master_seed=2 ** 64), "64-bit"),
    (lambda d: d.update(workers=0), ">= 1"),
    (lambda d: d["training"].update(batch_size="big"), "integer"),
    (lambda d: d["training"].update(n_epochs=0), ">= 1"),
    (lambda d: d["stats"].update(alpha=1.5), "(0, 1)"),
    (lambda d: d["stats"].update(n_permutations=0), ">= 1"),
    (lambda d: d.update(per_architecture={"deep4": {"n_epochs": 5}}),
     "not in architectures"),
    (lambda d: d["examples"][0]["source"].update(snr=-1.0), "snr"),
    (lambda d: d["preprocessing"].update(test_fraction=1.0), "(0, 1)"),
])
def test_parse_rejects_bad_configs(mutate, message):
    d = base_config_dict()
    mutate(d)
    with pytest.raises(ConfigError) as info:
        parse_config(d)
    assert message in str(info.value)


def test_parse_rejects_duplicate_example_ids():
    d = base_config_dict()
    d["examples"][1]["id"] = "exa"
    with pytest.raises(ConfigError) as info:
        parse_config(d)
    assert "duplicate" in str(info.value)


def test_training_override_merges():
    d = base_config_dict()
    d["per_architecture"] = {"eegnet_v2": {"n_epochs": 9}}
    config = parse_config(d)
    assert config.training_for("eegnet_v2").n_epochs == 9
    assert config.training_for("eegnet_v2").batch_size == 8  # inherited
    assert config.training_for("eegnet_v1").n_epochs == 2


def test_load_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(base_config_dict()))
    config = load_config(path)
    assert config.config_hash() == parse_config(base_config_dict()).config_hash()
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def _set_path(d, path, value):
    node = d
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value


HASH_MUTATIONS = [
    (("master_seed",), 8),
    (("architectures",), ["eegnet_v2"]),
    (("examples", 0, "id"), "exz"),
    (("examples", 0, "n_classes"), 3),
    (("examples", 0, "window", "start_offset_s"), -0.1),
    (("examples", 0, "window", "end_offset_s"), 0.8),
    (("examples", 0, "source", "n_channels"), 5),
    (("examples", 0, "source", "source_rate_hz"), 500.0),
    (("examples", 0, "source", "n_trials"), 41),
    (("examples", 0, "source", "snr"), 3.5),
    (("examples", 0, "source", "class_balance"), [2.0, 1.0]),
    (("examples", 0, "source", "artifact_rate"), 0.1),
    (("examples", 0, "source", "broken_channel_count"), 1),
    (("examples", 0, "source", "inter_trial_gap_s"), 0.25),
    (("examples", 0, "source", "subject_id"), "s2"),
    (("preprocessing", "band_low_hz"), 1.0),
    (("preprocessing", "band_high_hz"), 90.0),
    (("preprocessing", "target_rate_hz"), 125.0),
    (("preprocessing", "test_fraction"), 0.25),
    (("preprocessing", "filter_order"), 4),
    (("preprocessing", "standardize"), False),
    (("preprocessing", "cleaning"), {"amplitude_uv": 700.0}),
    (("preprocessing", "cleaning"), {"broken_fraction": 0.3}),
    (("training", "learning_rate"), 2e-3),
    (("training", "beta1"), 0.8),
    (("training", "beta2"), 0.99),
    (("training", "eps"), 1e-7),
    (("training", "batch_size"), 4),
    (("training", "n_epochs"), 3),
    (("training", "max_norm"), 2.0),
    (("per_architecture",), {"eegnet_v2": {"n_epochs": 3}}),
    (("stats", "n_permutations"), 300),
    (("stats", "alpha"), 0.01),
    (("stats", "enumeration_cap"), 50),
]


def test_config_hash_sensitive_to_every_field():
    base_hash = parse_config(base_config_dict()).config_hash()
    seen = {base_hash}
    for path, value in HASH_MUTATIONS:
        d = copy.deepcopy(base_config_dict())
        _set_path(d, path, value)
        h = parse_config(d).config_hash()
        assert h not in seen, f"hash unchanged for {path}"
        seen.add(h)


def test_config_hash_ignores_exempt_fields(tmp_path):
    assert set(HASH_EXEMPT_FIELDS) == {"output_dir", "workers"}
    base_hash = parse_config(base_config_dict()).config_hash()
    d = base_config_dict()
    d["output_dir"] = str(tmp_path / "somewhere")
    d["workers"] = 5
    assert parse_config(d).config_hash() == base_hash


# -- seed derivation --------------------------------------------------------------


def test_derive_seed_deterministic_and_distinct():
    a = derive_seed(7, "gen", "exa")
    assert a == derive_seed(7, "gen", "exa")
    assert 0 <= a < 2 ** 64
    others = {
        derive_seed(7, "gen", "exb"),
        derive_seed(7, "init", "exa"),
        derive_seed(8, "gen", "exa"),
        derive_seed(7, "gen", "exa", "x"),
    }
    assert a not in others and len(others) == 4


def test_role_seeds_distinct():
    seeds = {
        generation_seed(7, "exa"),
        init_seed(7, "exa", "eegnet_v2"),
        train_seed(7, "exa", "eegnet_v2"),
        permutation_seed(7, "exa", "eegnet_v2"),
        init_seed(7, "exa", "eegnet_v1"),
    }
    assert len(seeds) == 5


def test_derive_seed_validation():
    with pytest.raises(ValueError):
        derive_seed(-1, "gen")
    with pytest.raises(ValueError):
        derive_seed(2 ** 64, "gen")
    with pytest.raises(ValueError):
        derive_seed(0, "a|b")
    with pytest.raises(ValueError):
        derive_seed(0)


# -- runner ---------------------------------------------------------------------


def test_package_layout(fast_package):
    for name in ("config.resolved.json", "results.json", "provenance.json"):
        assert (fast_package / name).is_file()
    assert (fast_package / "report").is_dir()
    assert not any((fast_package / "report").iterdir())
    for ex in ("exa", "exb"):
        assert (fast_package / "runs" / ex / "preprocess.json").is_file()
        for arch in ("eegnet_v1", "eegnet_v2"):
            run = fast_package / "runs" / ex / arch
            for name in ("model.bin", "model.meta.json", "history.csv",
                         "predictions.csv", "record.json"):
                assert (run / name).is_file(), f"{ex}/{arch}/{name}"
    for name in ("accuracy_matrix.csv", "normalized.csv", "pairwise.json",
                 "excluded.json"):
        assert (fast_package / "stats" / name).is_file()


def test_results_json_contents(fast_package):
    results = read_json(fast_package / "results.json")
    assert results["format_version"] == 1
    assert results["status"] == "complete"
    assert results["n_runs"] == 4 and results["n_failed"] == 0
    keys = [(r["example_id"], r["architecture"]) for r in results["runs"]]
    assert keys == sorted(keys)
    config = parse_config(read_json(fast_package / "config.resolved.json"))
    assert results["config_hash"] == config.config_hash()
    for run in results["runs"]:
        assert run["status"] == "ok"
        assert 0.0 <= run["accuracy"] <= 1.0
        assert 0.0 < run["p_value"] <= 1.0
        record = read_json(
            fast_package / "runs" / run["example_id"] / run["architecture"]
            / "record.json")
        assert record == run


def test_history_and_predictions_shape(fast_package):
    history = (fast_package / "runs" / "exa" / "eegnet_v2" / "history.csv").read_text()
    lines = history.strip().split("\n")
    assert lines[0] == "epoch,loss,train_accuracy"
    assert len(lines) == 3  # header + 2 epochs
    preds = (fast_package / "runs" / "exa" / "eegnet_v2" / "predictions.csv").read_text()
    lines = preds.strip().split("\n")
    assert lines[0] == "trial,label,predicted,prob_0,prob_1"
    results = read_json(fast_package / "results.json")
    row = next(r for r in results["runs"]
               if (r["example_id"], r["architecture"]) == ("exa", "eegnet_v2"))
    assert len(lines) - 1 == row["n_test_trials"]


def test_accuracy_matrix_ordering_and_dual_role(fast_package):
    lines = (fast_package / "stats" / "accuracy_matrix.csv").read_text().strip().split("\n")
    assert lines[0] == "example_id,architecture,accuracy,normalized_accuracy,p_value"
    keys = [tuple(line.split(",")[:2]) for line in lines[1:]]
    assert keys == sorted(keys)
    assert len(keys) == 4
    normalized = (fast_package / "stats" / "normalized.csv").read_text().strip().split("\n")
    assert normalized[0] == "example_id,architecture,normalized_accuracy"
    excluded = read_json(fast_package / "stats" / "excluded.json")["excluded"]
    selected = {line.split(",")[0] for line in normalized[1:]}
    for entry in excluded:
        assert entry["example_id"] not in selected
    # Rows of selected examples carry their normalized value in both files.
    norm_map = {}
    for line in normalized[1:]:
        ex, arch, value = line.split(",")
        norm_map[(ex, arch)] = value
    for line in lines[1:]:
        ex, arch, _, norm, _ = line.split(",")
        if (ex, arch) in norm_map:
            assert norm == norm_map[(ex, arch)]
        else:
            assert norm == ""
    selected_rows = [line for line in normalized[1:]]
    if selected_rows:
        by_ex = {}
        for line in selected_rows:
            ex, _, value = line.split(",")
            by_ex.setdefault(ex, []).append(float(value))
        for values in by_ex.values():
            assert np.mean(values) == pytest.approx(1.0, abs=1e-12)


def test_pairwise_contents(fast_package):
    pairwise = read_json(fast_package / "stats" / "pairwise.json")
    assert pairwise["architectures"] == ["eegnet_v1", "eegnet_v2"]
    if pairwise["n_selected_examples"]:
        assert len(pairwise["pairs"]) == 1
        pair = pairwise["pairs"][0]
        assert pair["first"] == "eegnet_v1" and pair["second"] == "eegnet_v2"
        pooled = pair["overlap"]["pooled"]
        total = (pooled["both_correct"] + pooled["only_first"]
                 + pooled["only_second"] + pooled["both_wrong"])
        assert total == pytest.approx(1.0, abs=1e-9)
        st = pair["sign_test"]
        assert 0.0 < st["p_value"] <= 1.0


def test_run_requires_output_dir():
    config = parse_config(base_config_dict())
    with pytest.raises(ConfigError):
        run_comparison(config)


def test_run_refuses_non_empty_dir(tmp_path):
    (tmp_path / "junk.txt").write_text("x")
    config = parse_config(base_config_dict())
    with pytest.raises(ConfigError) as info:
        run_comparison(config, out_dir=tmp_path)
    assert "not empty" in str(info.value)


def test_run_is_byte_deterministic_across_workers(tmp_path, fast_package):
    config = parse_config(base_config_dict())
    again = tmp_path / "again"
    run_comparison(config, out_dir=again, workers=3)
    for rel in sorted(p.relative_to(fast_package)
                      for p in fast_package.rglob("*") if p.is_file()):
        if rel.name == "provenance.json":
            continue
        a = (fast_package / rel).read_bytes()
        b = (again / rel).read_bytes()
        assert a == b, f"{rel} differs between runs"


def test_partial_failure_marks_example_incomplete(tmp_path):
    d = base_config_dict()
    d["examples"].append({
        "id": "broken",
        "n_classes": 2,
        "window": {"start_offset_s": 0.0, "end_offset_s": 0.64},
        "source": {"type": "recording", "path": str(tmp_path / "missing")},
    })
    package = run_comparison(parse_config(d), out_dir=tmp_path / "out")
    assert package.status == "partial"
    assert package.n_failed == 2  # one per architecture
    results = read_json(tmp_path / "out" / "results.json")
    bad = [r for r in results["runs"] if r["example_id"] == "broken"]
    assert all(r["status"] == "failed" and r["error"] for r in bad)
    assert all(r["accuracy"] is None for r in bad)
    excluded = read_json(tmp_path / "out" / "stats" / "excluded.json")["excluded"]
    assert any(e["example_id"] == "broken" and e["reason"] == "incomplete_runs"
               for e in excluded)
    # The failed example contributes no rows to the accuracy matrix.
    lines = (tmp_path / "out" / "stats" / "accuracy_matrix.csv").read_text().splitlines()
    assert not any(line.startswith("broken,") for line in lines)


def test_all_runs_failed_raises(tmp_path):
    d = base_config_dict()
    d["examples"] = [{
        "id": "only",
        "n_classes": 2,
        "window": {"start_offset_s": 0.0, "end_offset_s": 0.64},
        "source": {"type": "recording", "path": str(tmp_path / "missing")},
    }]
    with pytest.raises(HarnessError):
        run_comparison(parse_config(d), out_dir=tmp_path / "out")


def test_recording_source_round_trip(tmp_path):
    from eegbench.eegdata import EpochWindow, SyntheticSpec, generate_synthetic, save_recording

    spec = SyntheticSpec(
        n_classes=2, n_channels=4, source_rate_hz=250.0, n_trials=40,
        window=EpochWindow(0.0, 0.64), snr=4.0,
    )
    rec_dir = tmp_path / "recording"
    save_recording(generate_synthetic(spec, seed=3), rec_dir)
    d = base_config_dict()
    d["examples"] = [{
        "id": "fromdisk",
        "n_classes": 2,
        "window": {"start_offset_s": 0.0, "end_offset_s": 0.64},
        "source": {"type": "recording", "path": str(rec_dir)},
    }]
    package = run_comparison(parse_config(d), out_dir=tmp_path / "out")
    assert package.status == "complete"
    report = verify_package(tmp_path / "out")
    assert report.ok


# -- verification ------------------------------------------------------------------


def copy_package(src: Path, dst: Path) -> Path:
    shutil.copytree(src, dst)
    return dst


def test_verify_clean_package(fast_package):
    report = verify_package(fast_package)
    assert report.ok
    assert report.n_runs_checked == 4
    assert report.issues == []


def test_verify_retrain_clean_package(fast_package):
    report = verify_package(fast_package, retrain=True)
    assert report.ok
    assert report.retrained


def test_verify_detects_tampered_predictions(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    target = pkg / "runs" / "exa" / "eegnet_v2" / "predictions.csv"
    lines = target.read_text().splitlines()
    first = lines[1].split(",")
    first[1] = "1" if first[1] == "0" else "0"  # flip one label
    lines[1] = ",".join(first)
    target.write_text("\n".join(lines) + "\n")
    report = verify_package(pkg)
    assert not report.ok
    assert any("exa" in issue and "eegnet_v2" in issue for issue in report.issues)


def test_verify_detects_missing_file(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    (pkg / "runs" / "exb" / "eegnet_v1" / "history.csv").unlink()
    report = verify_package(pkg)
    assert not report.ok
    assert any("history.csv" in issue for issue in report.issues)


def test_verify_detects_model_corruption(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    target = pkg / "runs" / "exa" / "eegnet_v1" / "model.bin"
    blob = bytearray(target.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    target.write_bytes(bytes(blob))
    report = verify_package(pkg)
    assert not report.ok


def test_verify_detects_stats_tampering(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    target = pkg / "stats" / "accuracy_matrix.csv"
    target.write_text(target.read_text() + "# tail\n")
    report = verify_package(pkg)
    assert not report.ok
    assert any("accuracy_matrix.csv" in issue for issue in report.issues)


def test_verify_detects_results_edit(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    results = read_json(pkg / "results.json")
    results["runs"][0]["accuracy"] = 0.999
    (pkg / "results.json").write_text(canonical_dumps(results))
    report = verify_package(pkg)
    assert not report.ok


def test_verify_detects_config_hash_mismatch(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    resolved = read_json(pkg / "config.resolved.json")
    resolved["master_seed"] = 12345
    (pkg / "config.resolved.json").write_text(canonical_dumps(resolved))
    report = verify_package(pkg)
    assert not report.ok
    assert any("hash" in issue or "seed" in issue for issue in report.issues)


def test_verify_missing_package(tmp_path):
    from eegbench.errors import VerificationError

    with pytest.raises(VerificationError):
        verify_package(tmp_path / "nope")


# -- report -----------------------------------------------------------------------


def test_build_report_structure(fast_package):
    report = build_report(fast_package)
    assert report["status"] == "complete"
    assert {s["architecture"] for s in report["summary"]} == {"eegnet_v1", "eegnet_v2"}
    for s in report["summary"]:
        assert s["n_examples"] == report["n_selected_examples"]
        if s["n_examples"] >= 2:
            assert s["sd_accuracy"] is not None
    assert len(report["per_example"]) >= 4
    matrix_lines = (fast_package / "stats" / "accuracy_matrix.csv").read_text() \
        .strip().split("\n")[1:]
    acc = {(l.split(",")[0], l.split(",")[1]): float(l.split(",")[2])
           for l in matrix_lines}
    for row in report["per_example"]:
        if row["accuracy"] is not None:
            assert row["accuracy"] == acc[(row["example_id"], row["architecture"])]


def test_emit_report_csv_and_json(fast_package, tmp_path):
    pkg = copy_package(fast_package, tmp_path / "pkg")
    csv_paths = emit_report(pkg, fmt="csv")
    assert sorted(p.name for p in csv_paths) == [
        "pairwise.csv", "per_example.csv", "summary.csv"]
    assert all(p.parent == pkg / "report" for p in csv_paths)
    first = {p: p.read_bytes() for p in csv_paths}
    json_paths = emit_report(pkg, fmt="json")
    assert [p.name for p in json_paths] == ["report.json"]
    body = read_json(json_paths[0])
    assert body == build_report(pkg)
    # Re-emission is byte-stable.
    again = emit_report(pkg, fmt="csv")
    for p in again:
        assert p.read_bytes() == first[p]
    from eegbench.errors import DataFormatError

    with pytest.raises(DataFormatError):
        emit_report(pkg, fmt="pdf")
