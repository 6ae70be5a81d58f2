"""CSV artifact emission and parsing.

Every artifact embeds its provenance as leading comment lines
(``# key=value``) so any output is reproducible from its header alone.
Floats are written with repr(), the shortest exact round-trip form, which
makes identical runs byte-identical and lets independent recomputation from
a file match in-memory values bit for bit.
"""

from __future__ import annotations

import csv
from pathlib import Path


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        # plain-float repr: exact shortest round trip, numpy subclasses included
        return repr(float(value))
    if hasattr(value, "item") and not isinstance(value, str):  # numpy scalar
        return format_cell(value.item())
    return str(value)


def write_csv(path: str | Path, columns: tuple[str, ...] | list[str],
              rows, header: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}={format_cell(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse an artifact CSV into (header dict, column names, string rows)."""
    header: dict[str, str] = {}
    rows: list[list[str]] = []
    columns: list[str] = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    header[key.strip()] = value.strip()
                continue
            lines.append(line)
        for i, parsed in enumerate(csv.reader(lines)):
            if not parsed:
                continue
            if i == 0:
                columns = parsed
            else:
                rows.append(parsed)
    return header, columns, rows
