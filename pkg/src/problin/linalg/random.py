"""Seeded random test matrices."""

from __future__ import annotations

import numpy as np

from .factor import householder_qr, symmetrize
from .spd import SpdMatrix


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_haar_orthogonal(d: int, seed) -> np.ndarray:
    """Haar-distributed orthogonal ``d x d`` matrix.

    QR of a standard Gaussian matrix, with the columns of ``Q`` flipped so
    that ``diag(R) > 0``; without the sign fix the law is not Haar.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    g = _rng(seed).standard_normal((d, d))
    q, r = householder_qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def random_test_matrix(d: int, rate: float, seed) -> SpdMatrix:
    """SPD matrix ``Q diag(lam) Q^T`` with ``lam ~ Exponential(rate)`` i.i.d. and Haar ``Q``.

    ``seed`` may be an integer, a sequence of integers or a ``Generator``.
    The eigenvalues are drawn before the rotation from the same stream.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not rate > 0.0:
        raise ValueError("rate must be positive")
    rng = _rng(seed)
    lam = rng.exponential(scale=1.0 / rate, size=d)
    q = random_haar_orthogonal(d, rng)
    return SpdMatrix(symmetrize((q * lam) @ q.T))
