"""Comparison harness: config, seeding, execution, reporting, verification."""

from .config import ComparisonConfig, load_config, parse_config
from .report import build_report, emit_report
from .runner import ResultsPackage, RunRecord, run_comparison
from .seeds import derive_seed
from .verify import VerificationReport, verify_package

__all__ = [
    "ComparisonConfig",
    "ResultsPackage",
    "RunRecord",
    "VerificationReport",
    "build_report",
    "derive_seed",
    "emit_report",
    "load_config",
    "parse_config",
    "run_comparison",
    "verify_package",
]
