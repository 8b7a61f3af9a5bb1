"""CSV writing/reading with a provenance comment line.

All floats are rendered with 17 significant digits so values round-trip
exactly; files use '\n' endings and no timestamps, making byte-identical
output reproducible for identical inputs.
"""

from __future__ import annotations

import csv
import io


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, fieldnames, rows, provenance=""):
    buf = io.StringIO()
    if provenance:
        buf.write(f"# {provenance}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        if isinstance(row, dict):
            writer.writerow([format_value(row.get(k)) for k in fieldnames])
        else:
            writer.writerow([format_value(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Returns (provenance, fieldnames, rows); rows are dicts of strings."""
    with open(path, newline="") as fh:
        provenance = ""
        first = fh.readline()
        if first.startswith("#"):
            provenance = first[1:].strip()
            first = fh.readline()
        fieldnames = next(csv.reader([first]))
        rows = [dict(zip(fieldnames, rec)) for rec in csv.reader(fh)]
    return provenance, fieldnames, rows
