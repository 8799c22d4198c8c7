"""Human-oriented summaries of a results package.

Reports are derived purely from the package's stats/ and results.json
files, never from in-memory state, so they can be regenerated at any
time. The summary aggregates each architecture over the examples that
survived significance selection: mean and sample standard deviation of
raw and normalized accuracy. The per-example table covers every example,
including excluded ones with their reasons, and the pairwise table
carries the sign tests and prediction overlaps.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from ..jsonutil import read_json, write_canonical_json
from .runner import REPORT_DIRNAME, RESULTS_FILENAME, STATS_DIRNAME

REPORT_FORMATS = ("csv", "json")


def _read_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise DataFormatError(f"missing stats file: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _mean_sd(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1))


def build_report(package_path) -> dict:
    """Collect report tables from a package as one JSON-ready dict."""
    package = Path(package_path)
    results = read_json(package / RESULTS_FILENAME)
    stats_dir = package / STATS_DIRNAME
    matrix_rows = _read_csv(stats_dir / "accuracy_matrix.csv")
    normalized_rows = _read_csv(stats_dir / "normalized.csv")
    pairwise = read_json(stats_dir / "pairwise.json")
    excluded = read_json(stats_dir / "excluded.json")["excluded"]

    selected_ids = sorted({row["example_id"] for row in normalized_rows})
    architectures = pairwise["architectures"]
    excluded_reason = {e["example_id"]: e["reason"] for e in excluded}

    summary = []
    for arch in architectures:
        raw = [float(r["accuracy"]) for r in matrix_rows
               if r["architecture"] == arch and r["example_id"] in selected_ids]
        norm = [float(r["normalized_accuracy"]) for r in normalized_rows
                if r["architecture"] == arch]
        mean_raw, sd_raw = _mean_sd(raw)
        mean_norm, sd_norm = _mean_sd(norm)
        summary.append({
            "architecture": arch,
            "n_examples": len(raw),
            "mean_accuracy": mean_raw,
            "sd_accuracy": sd_raw,
            "mean_normalized": mean_norm,
            "sd_normalized": sd_norm,
        })

    per_example = []
    for row in matrix_rows:
        ex = row["example_id"]
        per_example.append({
            "example_id": ex,
            "architecture": row["architecture"],
            "accuracy": float(row["accuracy"]),
            "normalized_accuracy": (
                float(row["normalized_accuracy"]) if row["normalized_accuracy"] else None),
            "p_value": float(row["p_value"]),
            "selected": ex in selected_ids,
            "excluded_reason": excluded_reason.get(ex),
        })
    listed = {r["example_id"] for r in per_example}
    for entry in excluded:
        if entry["example_id"] in listed:
            continue
        per_example.append({
            "example_id": entry["example_id"],
            "architecture": None,
            "accuracy": None,
            "normalized_accuracy": None,
            "p_value": None,
            "selected": False,
            "excluded_reason": entry["reason"],
        })
    per_example.sort(key=lambda r: (r["example_id"], r["architecture"] or ""))

    pairs = []
    for pair in pairwise["pairs"]:
        pooled = pair["overlap"]["pooled"]
        pairs.append({
            "first": pair["first"],
            "second": pair["second"],
            "n_examples": pair["n_examples"],
            "mean_normalized_first": pair["mean_normalized_first"],
            "mean_normalized_second": pair["mean_normalized_second"],
            "sign_test_p": pair["sign_test"]["p_value"],
            "overlap_both_correct": pooled["both_correct"],
            "overlap_only_first": pooled["only_first"],
            "overlap_only_second": pooled["only_second"],
            "overlap_both_wrong": pooled["both_wrong"],
        })

    report = {
        "status": results["status"],
        "config_hash": results["config_hash"],
        "n_selected_examples": len(selected_ids),
        "summary": summary,
        "per_example": per_example,
        "pairwise": pairs,
        "excluded": excluded,
    }
    if not selected_ids:
        report["note"] = "no significant examples"
    return report


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def emit_report(package_path, fmt: str = "csv") -> list[Path]:
    """Write report files into <package>/report/; returns the paths written."""
    if fmt not in REPORT_FORMATS:
        raise DataFormatError(
            f"unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")
    package = Path(package_path)
    report = build_report(package)
    out_dir = package / REPORT_DIRNAME
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / "report.json"
        write_canonical_json(path, report)
        return [path]

    written = []
    path = out_dir / "summary.csv"
    rows = [
        [s["architecture"], str(s["n_examples"]), _fmt(s["mean_accuracy"]),
         _fmt(s["sd_accuracy"]), _fmt(s["mean_normalized"]), _fmt(s["sd_normalized"])]
        for s in report["summary"]
    ]
    path.write_text(_csv_text(
        ["architecture", "n_examples", "mean_accuracy", "sd_accuracy",
         "mean_normalized", "sd_normalized"], rows), newline="\n")
    written.append(path)

    path = out_dir / "per_example.csv"
    rows = [
        [r["example_id"], r["architecture"] or "", _fmt(r["accuracy"]),
         _fmt(r["normalized_accuracy"]), _fmt(r["p_value"]),
         "yes" if r["selected"] else "no", r["excluded_reason"] or ""]
        for r in report["per_example"]
    ]
    path.write_text(_csv_text(
        ["example_id", "architecture", "accuracy", "normalized_accuracy",
         "p_value", "selected", "excluded_reason"], rows), newline="\n")
    written.append(path)

    path = out_dir / "pairwise.csv"
    rows = [
        [p["first"], p["second"], str(p["n_examples"]),
         _fmt(p["mean_normalized_first"]), _fmt(p["mean_normalized_second"]),
         _fmt(p["sign_test_p"]), _fmt(p["overlap_both_correct"]),
         _fmt(p["overlap_only_first"]), _fmt(p["overlap_only_second"]),
         _fmt(p["overlap_both_wrong"])]
        for p in report["pairwise"]
    ]
    path.write_text(_csv_text(
        ["first", "second", "n_examples", "mean_normalized_first",
         "mean_normalized_second", "sign_test_p", "overlap_both_correct",
         "overlap_only_first", "overlap_only_second", "overlap_both_wrong"],
        rows), newline="\n")
    written.append(path)
    return written
