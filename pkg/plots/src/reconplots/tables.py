"""Strict readers for the evaluation tables.

Header names must match the producing pipeline exactly; a missing column
is reported by name, and empty tables are rejected before any figure is
touched.
"""

from __future__ import annotations

import csv
from pathlib import Path


class TableError(ValueError):
    """Raised for unreadable, empty, or wrongly shaped tables."""


def read_table(path, required_columns):
    """Rows of a CSV table as dicts of floats (identity_id stays an int)."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise TableError(f"{path}: empty table (no header)")
        for column in required_columns:
            if column not in reader.fieldnames:
                raise TableError(f"{path}: missing required column '{column}'")
        rows = []
        for line_number, row in enumerate(reader, start=2):
            parsed = {}
            for column in required_columns:
                value = row.get(column)
                if value is None or value == "":
                    raise TableError(f"{path}: line {line_number}: empty '{column}' field")
                try:
                    parsed[column] = int(value) if column == "identity_id" else float(value)
                except ValueError:
                    raise TableError(
                        f"{path}: line {line_number}: cannot parse '{column}' value "
                        f"'{value}'") from None
            rows.append(parsed)
    if not rows:
        raise TableError(f"{path}: table has a header but no rows")
    return rows


def read_boxstats(path):
    return read_table(path, ("identity_id", "min", "q1", "median", "q3", "max"))


def read_edc(path):
    return read_table(path, ("threshold", "fraction"))


def read_roc(path):
    return read_table(path, ("fpr", "tpr"))
