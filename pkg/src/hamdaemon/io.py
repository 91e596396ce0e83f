"""Deterministic CSV/JSON writers.  Files are written to a temporary name and renamed."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows) -> Path:
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")
    return Path(path)


def write_matrix_csv(path, first_name: str, first, column_names, matrix) -> Path:
    """Time-major table: one row per entry of ``first`` followed by the matrix row."""
    matrix = np.asarray(matrix)
    rows = ([f] + list(r) for f, r in zip(first, matrix))
    return write_csv(path, [first_name] + [_fmt(c) for c in column_names], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> Path:
    _atomic_write(Path(path), json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return Path(path)


def read_csv(path):
    """Header list and float array of a CSV written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
