"""Deterministic CSV / JSON / binary emitters."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .errors import RwlabError


class OutputError(RwlabError, OSError):
    """Writing an artifact failed."""


def _num(v):
    """Round-trip decimal text for a float (``repr``), ints unchanged."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    """Comma separated, ``.`` decimal point, LF line endings, full precision."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_num(v) for v in row))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return obj


def write_json(path, obj):
    text = json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_matrix(path, matrix, meta=None):
    """JSON header line, then the matrix as little-endian float64 (row-major)."""
    a = np.ascontiguousarray(matrix, dtype="<f8")
    header = dict(meta or {}, shape=list(a.shape), dtype="<f8")
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(jsonable(header), sort_keys=True).encode() + b"\n")
            fh.write(a.tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_matrix(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        a = np.frombuffer(fh.read(), dtype="<f8")
    return a.reshape(header["shape"]), header


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc}") from exc
    return path
