"""File formats shared by the command line tools.

Matrices are stored one sample per row with header ``f0,...,f{d-1}``; in
memory they are ``d x m`` with samples as columns, so readers and writers
transpose.  Labels are a single ``label`` column of integers.  Floats are
written with 17 significant digits so a round trip is exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


class FileFormatError(InvalidInputError):
    """An input file exists but does not follow the expected layout."""


def format_float(v) -> str:
    return format(float(v), ".17g")


def write_matrix(path, Z) -> None:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(Z.shape[0])])
        for col in Z.T:
            w.writerow([format_float(v) for v in col])


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty matrix file")
    header, body = rows[0], rows[1:]
    if header != [f"f{i}" for i in range(len(header))]:
        raise FileFormatError(f"{path}: header must be f0,...,f{{d-1}}")
    if not body:
        raise FileFormatError(f"{path}: no samples")
    try:
        data = np.array([[float(v) for v in r] for r in body if r])
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise FileFormatError(f"{path}: ragged rows")
    return data.T.copy()


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("label\n")
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(v)}\n")


def read_labels(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0] != ["label"]:
        raise FileFormatError(f"{path}: expected a single column with header 'label'")
    out = []
    for r in rows[1:]:
        if len(r) != 1:
            raise FileFormatError(f"{path}: expected one value per row")
        try:
            out.append(int(r[0]))
        except ValueError as exc:
            raise FileFormatError(f"{path}: non-integer label {r[0]!r}") from exc
    return np.array(out, dtype=np.int64)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
