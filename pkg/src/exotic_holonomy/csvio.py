"""CSV output with a ``#`` metadata header and deterministic number formatting."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__version__ = "0.1.0"


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".15g")


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], meta: Mapping[str, object] | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# exotic_holonomy {__version__}\n")
    for key, value in (meta or {}).items():
        for line in str(value).strip().splitlines() or [""]:
            buf.write(f"# {key}: {line}\n")
    buf.write("# columns: " + ",".join(columns) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path, columns, rows, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, meta))
    return path


def read_csv(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Inverse of ``write_csv``: (metadata, columns, rows as strings)."""
    meta: dict[str, str] = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0] if rows else [], rows[1:]
