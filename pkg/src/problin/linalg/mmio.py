"""Matrix Market reader/writer for dense real matrices and vectors.

Supports the ``coordinate`` and ``array`` formats with ``real`` (or
``integer``) fields and ``general`` or ``symmetric`` symmetry.  Everything
is read into a dense array; sparse storage is out of scope.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .factor import as_matrix

_BANNER = "%%MatrixMarket"


class MatrixMarketError(ValueError):
    pass


def _data_lines(lines):
    for line in lines:
        s = line.strip()
        if s and not s.startswith("%"):
            yield s


def read_matrix(path) -> np.ndarray:
    """Read a Matrix Market file into a dense 2-D float array."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].lower().startswith(_BANNER.lower()):
        raise MatrixMarketError(f"{path}: missing {_BANNER} banner")
    header = lines[0].split()
    if len(header) != 5:
        raise MatrixMarketError(f"{path}: malformed banner {lines[0]!r}")
    _, obj, fmt, field, symmetry = (h.lower() for h in header)
    if obj != "matrix":
        raise MatrixMarketError(f"{path}: unsupported object {obj!r}")
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"{path}: unsupported format {fmt!r}")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")

    body = _data_lines(lines[1:])
    try:
        size = [int(t) for t in next(body).split()]
    except StopIteration:
        raise MatrixMarketError(f"{path}: missing size line") from None
    symmetric = symmetry == "symmetric"

    if fmt == "coordinate":
        if len(size) != 3:
            raise MatrixMarketError(f"{path}: coordinate size line needs rows cols nnz")
        rows, cols, nnz = size
        out = np.zeros((rows, cols))
        count = 0
        for s in body:
            parts = s.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"{path}: bad entry line {s!r}")
            i, j, val = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
            if not (0 <= i < rows and 0 <= j < cols):
                raise MatrixMarketError(f"{path}: entry ({i + 1}, {j + 1}) out of range")
            out[i, j] = val
            if symmetric and i != j:
                out[j, i] = val
            count += 1
        if count != nnz:
            raise MatrixMarketError(f"{path}: expected {nnz} entries, found {count}")
        return out

    if len(size) != 2:
        raise MatrixMarketError(f"{path}: array size line needs rows cols")
    rows, cols = size
    values = [float(s.split()[0]) for s in body]
    out = np.zeros((rows, cols))
    if symmetric:
        # Lower triangle, column by column.
        expected = rows * (rows + 1) // 2
        if rows != cols or len(values) != expected:
            raise MatrixMarketError(f"{path}: symmetric array needs {expected} values, found {len(values)}")
        it = iter(values)
        for j in range(cols):
            for i in range(j, rows):
                out[i, j] = out[j, i] = next(it)
        return out
    if len(values) != rows * cols:
        raise MatrixMarketError(f"{path}: expected {rows * cols} values, found {len(values)}")
    return np.array(values).reshape(cols, rows).T.copy()


def read_vector(path) -> np.ndarray:
    """Read an ``n x 1`` (or ``1 x n``) Matrix Market file as a 1-D array."""
    m = read_matrix(path)
    if 1 not in m.shape:
        raise MatrixMarketError(f"{path}: expected a vector, got shape {m.shape}")
    return m.reshape(-1)


def write_matrix(path, a, fmt: str = "array", symmetric: bool = False, comment: str | None = None) -> None:
    """Write a dense matrix (or 1-D vector, as a column) in Matrix Market format.

    Values are written with ``repr`` precision so a round trip is exact.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    a = as_matrix(a)
    if fmt not in ("array", "coordinate"):
        raise ValueError(f"unknown format {fmt!r}")
    rows, cols = a.shape
    if symmetric and (rows != cols or not np.array_equal(a, a.T)):
        raise ValueError("symmetric output requested for a non-symmetric matrix")
    sym = "symmetric" if symmetric else "general"
    out = [f"{_BANNER} matrix {fmt} real {sym}"]
    if comment:
        out.extend(f"% {c}" for c in comment.splitlines())
    if fmt == "array":
        out.append(f"{rows} {cols}")
        for j in range(cols):
            start = j if symmetric else 0
            out.extend(repr(float(a[i, j])) for i in range(start, rows))
    else:
        entries = [
            (i, j, a[i, j])
            for j in range(cols)
            for i in range(j if symmetric else 0, rows)
            if a[i, j] != 0.0
        ]
        out.append(f"{rows} {cols} {len(entries)}")
        out.extend(f"{i + 1} {j + 1} {float(v)!r}" for i, j, v in entries)
    Path(os.fspath(path)).write_text("\n".join(out) + "\n")
