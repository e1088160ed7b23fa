"""NDJSON diagnostics series."""
from __future__ import annotations

import json

from .fields import DiagnosticsRecord


def write_series(records, path) -> None:
    """One record per line, keys in :meth:`DiagnosticsRecord.keys` order.

    Floats are written at ``repr`` precision, so :func:`read_series`
    returns equal records.  NaN entries are written as ``NaN``.
    """
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_dict()) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write series to {path}: {exc}") from exc


def read_series(path) -> list[DiagnosticsRecord]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [DiagnosticsRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    except OSError as exc:
        raise OSError(f"cannot read series from {path}: {exc}") from exc
