"""Row-stacking vectorisation and (symmetric) Kronecker products.

With ``vec`` stacking rows, ``kron(A, B) @ vec(C) == vec(A @ C @ B.T)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import DimensionError
from .factor import as_matrix, as_vector


def vec(a) -> np.ndarray:
    """Stack the rows of ``a`` into one vector: ``vec(a)[i*cols + j] == a[i, j]``."""
    a = as_matrix(a)
    return a.reshape(-1).copy()


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = as_vector(v)
    cols = rows if cols is None else cols
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape length {v.size} into ({rows}, {cols})")
    return v.reshape(rows, cols).copy()


def kron(a, b) -> np.ndarray:
    """Kronecker product with ``kron(a, b)[(i, j), (k, l)] == a[i, k] * b[j, l]``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    (m, n), (p, q) = a.shape, b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(m * p, n * q)


@lru_cache(maxsize=32)
def _commutation(d: int) -> np.ndarray:
    k = np.zeros((d * d, d * d))
    i, j = np.divmod(np.arange(d * d), d)
    k[i * d + j, j * d + i] = 1.0
    k.flags.writeable = False
    return k


def commutation(d: int) -> np.ndarray:
    """Permutation ``K`` with ``K @ vec(C) == vec(C.T)`` for ``d x d`` matrices."""
    return _commutation(d).copy()


def symmetrizer(d: int) -> np.ndarray:
    """The ``d^2 x d^2`` projector ``Gamma`` with ``Gamma vec(C) = vec((C + C.T) / 2)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return 0.5 * (np.eye(d * d) + _commutation(d))


def symkron(a, b) -> np.ndarray:
    """Symmetric Kronecker product ``Gamma (a kron b) Gamma``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise DimensionError(f"symkron needs square operands of equal size, got {a.shape} and {b.shape}")
    g = symmetrizer(a.shape[0])
    return g @ kron(a, b) @ g
