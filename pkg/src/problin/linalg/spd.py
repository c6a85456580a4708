"""SPD-induced geometry, the polar decomposition and PSD pseudo-solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NotSPDError, SingularMatrixError
from .factor import (
    as_square,
    as_vector,
    check_symmetric,
    cholesky,
    cond_estimate,
    eigh,
    svd_square,
    symmetrize,
)

SYMMETRY_TOL = 1e-10
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """A symmetric positive-definite matrix whose Cholesky factor is known.

    Construction fails with :class:`NotSPDError` (or ``NotSymmetricError``)
    unless the input is symmetric to a relative Frobenius tolerance of
    ``1e-10`` and has strictly positive Cholesky pivots.
    """

    matrix: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = check_symmetric(self.matrix, SYMMETRY_TOL, "SPD candidate")
        m = symmetrize(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        low = cholesky(m, check=False)
        low.flags.writeable = False
        object.__setattr__(self, "chol", low)

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        out = self.matrix if dtype is None else self.matrix.astype(dtype)
        return out.copy() if copy else out


def _spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(np.asarray(m, dtype=float))


def m_inner(v, w, m) -> float:
    """Inner product ``v.T @ M @ w`` induced by the SPD matrix ``m``."""
    m = _spd(m)
    v = as_vector(v, "v")
    w = as_vector(w, "w")
    d = m.shape[0]
    if v.size != d or w.size != d:
        raise DimensionError(f"vectors of length {v.size}, {w.size} against a {d}x{d} matrix")
    return float(v @ m.matrix @ w)


def m_norm(v, m) -> float:
    # Through the Cholesky factor so the result is never sqrt of a negative round-off.
    m = _spd(m)
    v = as_vector(v, "v")
    if v.size != m.shape[0]:
        raise DimensionError(f"vector of length {v.size} against a {m.shape[0]}x{m.shape[0]} matrix")
    return float(np.linalg.norm(m.chol.T @ v))


def polar_decompose(a):
    """Polar decomposition ``a = P @ H`` of an invertible square matrix.

    Computed from the SVD ``a = U S V^T`` as ``P = U V^T`` and
    ``H = V S V^T``, so ``H`` equals ``(a^T a)^{1/2}``.

    Returns
    -------
    P : ndarray
        Orthogonal factor.
    H : SpdMatrix
        Symmetric positive-definite factor.

    Raises
    ------
    SingularMatrixError
        If the 1-norm condition estimate of ``a`` reaches ``1e12``.
    """
    a = as_square(a)
    kappa = cond_estimate(a)
    if not kappa < MAX_CONDITION:
        raise SingularMatrixError(f"polar decomposition needs an invertible matrix (condition estimate {kappa:.3e})")
    u, s, vt = svd_square(a)
    p = u @ vt
    h = symmetrize((vt.T * s) @ vt)
    return p, SpdMatrix(h)


def pseudo_solve(m, y, rank_tol: float = 1e-12):
    """Minimum-norm least-squares solution of ``m x = y`` for symmetric PSD ``m``.

    Eigenvalues at or below ``rank_tol * lambda_max`` are treated as zero.
    ``y`` may be a vector or a matrix of right-hand sides.
    """
    m = check_symmetric(m, SYMMETRY_TOL, "pseudo_solve matrix")
    y = np.asarray(y, dtype=float)
    if y.shape[0] != m.shape[0]:
        raise DimensionError(f"right-hand side has {y.shape[0]} rows, matrix is {m.shape[0]}x{m.shape[0]}")
    if m.shape[0] == 0:
        return np.zeros_like(y)
    w, v = eigh(m)
    lam_max = w.max()
    if lam_max <= 0.0:
        return np.zeros_like(y)
    keep = w > rank_tol * lam_max
    vk = v[:, keep]
    coeff = vk.T @ y
    coeff = coeff / (w[keep][:, None] if coeff.ndim == 2 else w[keep])
    return vk @ coeff


def pinv_psd(m, rank_tol: float = 1e-12) -> np.ndarray:
    """Eigen-pseudo-inverse of a symmetric PSD matrix."""
    m = check_symmetric(m, SYMMETRY_TOL, "pinv_psd matrix")
    return symmetrize(pseudo_solve(m, np.eye(m.shape[0]), rank_tol))


def is_spd(m) -> bool:
    try:
        SpdMatrix(np.asarray(m, dtype=float))
    except (NotSPDError, ValueError):
        return False
    return True


def check_psd(cov, rel_tol: float = 1e-8, name="covariance", scale: float = 0.0) -> np.ndarray:
    """Validate symmetry and ``min eig >= -rel_tol * lambda_max`` for a covariance.

    The eigenvalue bound is checked with a Cholesky factorization of the
    matrix shifted by ``rel_tol * max(trace, scale)``, which avoids a full
    eigen-decomposition on every construction.  ``scale`` lets a caller that
    derived ``cov`` from a larger matrix (a posterior from its prior) judge
    round-off against that matrix's size.
    """
    cov = check_symmetric(cov, SYMMETRY_TOL, name)
    if cov.shape[0] == 0:
        return cov
    tr = float(np.trace(cov))
    ref = max(tr, scale)
    if tr < -rel_tol * ref:
        raise NotSPDError(f"{name} has negative trace {tr:.3e}")
    shift = rel_tol * ref if ref > 0.0 else np.finfo(float).tiny
    try:
        cholesky(symmetrize(cov) + shift * np.eye(cov.shape[0]), check=False)
    except NotSPDError:
        raise NotSPDError(f"{name} is not positive semi-definite") from None
    return cov
