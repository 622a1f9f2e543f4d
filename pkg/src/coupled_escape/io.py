"""Atomic CSV and JSON writers used by the command-line front end."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(value: Any) -> Any:
    # repr gives the shortest string that round-trips, so output is stable
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return value


def format_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def format_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_table(path: Path, columns: Sequence[str], rows: Sequence[Sequence[Any]],
                fmt: str = "csv") -> None:
    """Write rows as CSV, or as JSON ``{"columns": [...], "rows": [...]}``."""
    if fmt == "csv":
        _atomic_write(path, format_csv(columns, rows))
    elif fmt == "json":
        _atomic_write(path, format_json({"columns": list(columns), "rows": [list(r) for r in rows]}))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_json(path: Path, obj: Any) -> None:
    _atomic_write(path, format_json(obj))


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    """Read back a CSV written by :func:`write_table` (cells stay strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]
