"""Canonical JSON helpers.

Everything hashed or compared byte-for-byte goes through these: sorted keys,
no whitespace, ASCII only, NaN rejected, trailing newline. Python's shortest
round-trip float repr keeps the output deterministic across runs.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataFormatError


def canonical_dumps(obj) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False
    ) + "\n"


def write_canonical_json(path, obj) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="ascii")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"missing JSON file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"unreadable JSON in {path}: {exc}") from exc
