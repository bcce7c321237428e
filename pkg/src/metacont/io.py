"""Table writers: CSV with round-trip float formatting, or JSON records."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_table", "read_table", "write_json"]


def format_value(v):
    """Render one cell; floats use 17 significant digits (exact round trip)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def write_table(path, columns, rows, fmt="csv"):
    """Write ``rows`` (sequences aligned with ``columns``) and return the file path.

    With ``fmt="json"`` the suffix becomes ``.json`` and the table is a list
    of records; non-finite floats become ``null``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = path.with_suffix(".json")
        records = [dict(zip(columns, (_jsonable(v) for v in row))) for row in rows]
        path.write_text(json.dumps(records, indent=1) + "\n")
        return path
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")
    return path


def read_table(path):
    """Read a CSV written by :func:`write_table` as a list of dicts of strings."""
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
