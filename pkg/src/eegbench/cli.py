"""Command line interface.

Subcommands:
  gen     generate a synthetic recording container from a spec file
  run     execute a comparison config and write a results package
  report  summarize a results package as CSV or JSON tables
  verify  audit a results package against its stored config
  stats   run individual statistics on prediction or value files

Exit codes: 0 success, 1 partial or failed result (some runs failed, or
verification found mismatches), 2 invalid config or input, 3 internal
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .eegdata import SyntheticSpec, generate_synthetic, save_recording
from .errors import (
    ConfigError,
    DataFormatError,
    EegBenchError,
    GenerationError,
    VerificationError,
)
from .harness import build_report, emit_report, load_config, run_comparison, verify_package
from .harness.runner import parse_predictions_csv
from .jsonutil import canonical_dumps, read_json
from .stats import (
    DEFAULT_ENUMERATION_CAP,
    DEFAULT_N_PERMUTATIONS,
    mean_class_accuracy,
    permutation_test,
    prediction_overlap,
    sign_test,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2
EXIT_INTERNAL = 3


def _cmd_gen(args) -> int:
    spec = SyntheticSpec.from_dict(read_json(args.spec))
    recording = generate_synthetic(spec, args.seed)
    save_recording(recording, args.out)
    print(f"wrote {recording.n_channels} channels x {recording.n_samples} samples "
          f"({len(recording.events)} events) to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config)
    package = run_comparison(config, out_dir=args.out, workers=args.workers)
    n_ok = len(package.records) - package.n_failed
    print(f"{package.status}: {n_ok}/{len(package.records)} runs succeeded; "
          f"package at {package.path}")
    if package.status != "complete":
        for record in package.records:
            if record.status != "ok":
                print(f"  failed {record.example_id}/{record.architecture}: "
                      f"{record.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_report(args) -> int:
    written = emit_report(args.package, fmt=args.format)
    for path in written:
        print(f"wrote {path}")
    note = build_report(args.package).get("note")
    if note:
        print(note)
    return EXIT_OK


def _cmd_verify(args) -> int:
    report = verify_package(args.package, retrain=args.retrain)
    if report.ok:
        mode = "retrain" if report.retrained else "standard"
        print(f"verification passed ({mode}): {report.n_runs_checked} runs checked")
        return EXIT_OK
    for issue in report.issues:
        print(f"FAIL {issue}", file=sys.stderr)
    print(f"verification failed: {len(report.issues)} issue(s)", file=sys.stderr)
    return EXIT_PARTIAL


def _load_predictions(path):
    return parse_predictions_csv(Path(path).read_text())


def _load_values(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        return np.array([float(ln) for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: expected one number per line: {exc}") from exc


def _cmd_stats(args) -> int:
    if args.stat == "mca":
        predicted, labels, probs = _load_predictions(args.predictions)
        value = mean_class_accuracy(predicted, labels, probs.shape[1])
        print(canonical_dumps({"mca": value}), end="")
    elif args.stat == "permutation":
        predicted, labels, probs = _load_predictions(args.predictions)
        result = permutation_test(
            predicted, labels, probs.shape[1],
            n_permutations=args.n_perm, seed=args.seed,
            enumeration_cap=args.enumeration_cap,
        )
        print(canonical_dumps({
            "p_value": result.p_value,
            "observed": result.observed,
            "n_used": result.n_used,
            "exhaustive": result.exhaustive,
        }), end="")
    elif args.stat == "sign-test":
        result = sign_test(_load_values(args.a), _load_values(args.b))
        print(canonical_dumps({
            "p_value": result.p_value,
            "n_positive": result.n_positive,
            "n_negative": result.n_negative,
            "n_ties": result.n_ties,
            "degenerate": result.degenerate,
        }), end="")
    else:  # overlap
        pred_a, labels_a, _ = _load_predictions(args.a)
        pred_b, labels_b, _ = _load_predictions(args.b)
        if not np.array_equal(labels_a, labels_b):
            raise DataFormatError("prediction files carry different labels")
        print(canonical_dumps(
            prediction_overlap(pred_a, pred_b, labels_a).as_dict()), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegbench",
        description="EEG decoder benchmark: generate data, run comparisons, "
                    "report and verify results.",
    )
    parser.add_argument("--version", action="version", version=f"eegbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic recording container")
    p.add_argument("--spec", required=True, help="JSON file describing the synthetic recording")
    p.add_argument("--out", required=True, help="output container directory")
    p.add_argument("--seed", type=int, default=0, help="generation seed (default 0)")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run a comparison and write a results package")
    p.add_argument("--config", required=True, help="comparison config JSON file")
    p.add_argument("--out", default=None,
                   help="output package directory (overrides config output_dir)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker pool size (overrides config workers)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summarize a results package")
    p.add_argument("--package", required=True, help="results package directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("verify", help="audit a results package")
    p.add_argument("--package", required=True, help="results package directory")
    p.add_argument("--retrain", action="store_true",
                   help="additionally retrain every run and compare bytes")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("stats", help="run one statistic on stored files")
    stats_sub = p.add_subparsers(dest="stat", required=True)

    s = stats_sub.add_parser("mca", help="mean class accuracy of a predictions CSV")
    s.add_argument("--predictions", required=True)
    s.set_defaults(func=_cmd_stats)

    s = stats_sub.add_parser("permutation", help="label permutation test")
    s.add_argument("--predictions", required=True)
    s.add_argument("--n-perm", type=int, default=DEFAULT_N_PERMUTATIONS, dest="n_perm")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--enumeration-cap", type=int, default=DEFAULT_ENUMERATION_CAP,
                   dest="enumeration_cap")
    s.set_defaults(func=_cmd_stats)

    s = stats_sub.add_parser("sign-test", help="exact two-sided sign test on paired values")
    s.add_argument("--a", required=True, help="first value file, one number per line")
    s.add_argument("--b", required=True, help="second value file, one number per line")
    s.set_defaults(func=_cmd_stats)

    s = stats_sub.add_parser("overlap", help="prediction overlap of two predictions CSVs")
    s.add_argument("--a", required=True, help="first predictions CSV")
    s.add_argument("--b", required=True, help="second predictions CSV")
    s.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, GenerationError, VerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EegBenchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
