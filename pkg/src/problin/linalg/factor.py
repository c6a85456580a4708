"""Dense factorizations written against plain numpy arrays.

Householder QR, Cholesky, cyclic Jacobi for symmetric eigenproblems and
one-sided (Hestenes) Jacobi for the SVD.  Loops run over columns or over
rounds of disjoint rotation pairs, so every inner operation is a vectorized
numpy call; that keeps d ~ 100 problems fast enough for the calibration study.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import DimensionError, NotSPDError, NotSymmetricError, SingularMatrixError

_EPS = np.finfo(float).eps


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_vector(v, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_square(a, name="matrix") -> np.ndarray:
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def symmetry_gap(a: np.ndarray) -> float:
    """Relative Frobenius size of the antisymmetric part of ``a``."""
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - a.T) / scale)


def check_symmetric(a, tol=1e-10, name="matrix") -> np.ndarray:
    a = as_square(a, name)
    gap = symmetry_gap(a)
    if gap > tol:
        raise NotSymmetricError(f"{name} is not symmetric (relative gap {gap:.3e} > {tol:g})")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


# --------------------------------------------------------------------------
# QR


def householder_qr(a, mode="reduced"):
    """QR factorization by Householder reflections.

    Parameters
    ----------
    a : (m, n) array_like
    mode : {"reduced", "complete", "r"}
        ``"reduced"`` returns ``Q`` of shape (m, min(m, n)); ``"complete"``
        returns the square ``Q``; ``"r"`` returns only ``R``.

    Returns
    -------
    Q, R : ndarray
        ``a = Q @ R`` with ``Q`` having orthonormal columns and ``R`` upper
        triangular.  No sign normalization of ``diag(R)`` is applied.
    """
    r = as_matrix(a).copy()
    m, n = r.shape
    k = min(m, n) if m > n else min(m - 1, n)
    reflectors = []
    for j in range(max(k, 0)):
        x = r[j:, j]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += np.copysign(normx, x[0])
        v /= np.linalg.norm(v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        r[j + 1 :, j] = 0.0
        reflectors.append(v)
    if mode == "r":
        return np.triu(r[: min(m, n)])
    ncols = m if mode == "complete" else min(m, n)
    q = np.eye(m, ncols)
    for j in range(len(reflectors) - 1, -1, -1):
        v = reflectors[j]
        if v is None:
            continue
        q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    if mode == "complete":
        return q, np.triu(r)
    return q, np.triu(r[:ncols])


def numerical_rank(a, tol=1e-10) -> int:
    """Rank from the diagonal of R, relative to its largest entry.

    Householder QR without pivoting is not rank revealing in general, but for
    the small, full-or-nearly-full column sets checked here it is adequate.
    """
    a = as_matrix(a)
    if a.size == 0:
        return 0
    diag = np.abs(np.diag(householder_qr(a, mode="r")))
    if diag.size == 0 or diag.max() == 0.0:
        return 0
    # Column norms guard against a large first column masking a dependent one.
    scale = max(diag.max(), np.linalg.norm(a, axis=0).max())
    return int(np.sum(diag > tol * scale))


# --------------------------------------------------------------------------
# Triangular solves, Cholesky, general solves


def solve_triangular(t, b, lower=False, trans=False):
    """Solve ``t x = b`` (or ``t.T x = b``) by substitution; ``b`` may be 2-D."""
    t = np.asarray(t, dtype=float)
    if trans:
        t = t.T
        lower = not lower
    b = np.asarray(b, dtype=float)
    x = np.array(b, dtype=float, copy=True)
    n = t.shape[0]
    order = range(n) if lower else range(n - 1, -1, -1)
    for i in order:
        if lower:
            acc = x[i] - t[i, :i] @ x[:i]
        else:
            acc = x[i] - t[i, i + 1 :] @ x[i + 1 :]
        if t[i, i] == 0.0:
            raise SingularMatrixError("triangular factor has a zero pivot")
        x[i] = acc / t[i, i]
    return x


def cholesky(a, check=True) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``a = L @ L.T``.

    Raises
    ------
    NotSPDError
        On the first non-positive pivot.
    """
    a = as_square(a)
    if check:
        check_symmetric(a)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        row = low[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > 0.0:
            raise NotSPDError(f"Cholesky pivot {j} is {pivot:.3e}; matrix is not positive definite")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ row) / low[j, j]
    return low


def cho_solve(low, b):
    y = solve_triangular(low, b, lower=True)
    return solve_triangular(low, y, lower=True, trans=True)


def spd_inv(a) -> np.ndarray:
    low = cholesky(a)
    inv = cho_solve(low, np.eye(low.shape[0]))
    return symmetrize(inv)


def solve(a, b):
    """Solve the square system ``a x = b`` through Householder QR."""
    a = as_square(a)
    q, r = householder_qr(a)
    diag = np.abs(np.diag(r))
    if diag.min() <= _EPS * a.shape[0] * max(diag.max(), 1e-300):
        raise SingularMatrixError("matrix is singular to working precision")
    return solve_triangular(r, q.T @ np.asarray(b, dtype=float))


def inv(a) -> np.ndarray:
    a = as_square(a)
    return solve(a, np.eye(a.shape[0]))


def lstsq(a, b):
    """Least-squares solution of a full-column-rank system via QR."""
    a = as_matrix(a)
    q, r = householder_qr(a)
    return solve_triangular(r, q.T @ np.asarray(b, dtype=float))


def cond_estimate(a) -> float:
    """1-norm condition number estimate (Hager's method on a QR factorization).

    Returns ``inf`` for matrices that are singular to working precision.
    """
    a = as_square(a)
    n = a.shape[0]
    q, r = householder_qr(a)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        return 1.0
    if diag.min() <= _EPS * n * max(diag.max(), 1e-300):
        return float("inf")

    def ainv(v):
        return solve_triangular(r, q.T @ v)

    def ainv_t(v):
        return q @ solve_triangular(r, v, trans=True)

    x = np.full(n, 1.0 / n)
    est = 0.0
    for _ in range(5):
        y = ainv(x)
        est_new = np.abs(y).sum()
        xi = np.where(y >= 0.0, 1.0, -1.0)
        z = ainv_t(xi)
        j = int(np.argmax(np.abs(z)))
        if est_new <= est or np.abs(z[j]) <= z @ x:
            est = max(est, est_new)
            break
        est = est_new
        x = np.zeros(n)
        x[j] = 1.0
    # Higham's alternative vector protects against Hager underestimates.
    alt = np.array([(-1.0) ** i * (1.0 + i / max(n - 1, 1)) for i in range(n)])
    est = max(est, 2.0 * np.abs(ainv(alt)).sum() / (3.0 * n))
    return float(np.abs(a).sum(axis=0).max() * est)


# --------------------------------------------------------------------------
# Jacobi methods


@lru_cache(maxsize=64)
def _round_robin(n: int):
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p), max(p)) for p in pairs if max(p) < n]
        if pairs:
            p = np.array([pr[0] for pr in pairs])
            q = np.array([pr[1] for pr in pairs])
            rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def jacobi_eigh(a, tol=1e-15, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each round rotates a set of disjoint (p, q) pairs simultaneously, which
    is an exact orthogonal similarity because the pairs do not overlap.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Orthonormal eigenvectors as columns, ``a @ v = v * w``.
    """
    a = symmetrize(check_symmetric(a)).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    rounds = _round_robin(n)
    tiny = np.finfo(float).tiny
    for _ in range(max_sweeps):
        diag_abs = np.abs(np.diag(a))
        off = np.abs(a - np.diag(np.diag(a)))
        thresh = tol * np.sqrt(np.outer(diag_abs, diag_abs))
        if np.all(off <= np.maximum(thresh, tiny)):
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > np.maximum(tol * np.sqrt(np.abs(app * aqq)), tiny)
            if not active.any():
                continue
            p, q, apq, app, aqq = p[active], q[active], apq[active], app[active], aqq[active]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap = a[:, p].copy()
            aq = a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap = a[p, :].copy()
            aq = a[q, :]
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p].copy()
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def svd(a, tol=1e-15, max_sweeps=60):
    """Thin SVD by one-sided Jacobi rotations on the columns.

    Returns ``U, s, Vt`` with singular values in descending order.  Tall or
    square input only; pass ``a.T`` for wide matrices.
    """
    work = as_matrix(a).copy()
    m, n = work.shape
    if m < n:
        raise DimensionError("svd expects rows >= cols; factor the transpose")
    v = np.eye(n)
    rounds = _round_robin(n) if n > 1 else ()
    tiny = np.finfo(float).tiny
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            wp = work[:, p]
            wq = work[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            active = np.abs(gamma) > np.maximum(tol * np.sqrt(alpha * beta), tiny)
            if not active.any():
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            wp = work[:, p].copy()
            wq = work[:, q]
            work[:, p] = c * wp - s * wq
            work[:, q] = s * wp + c * wq
            vp = v[:, p].copy()
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            break
    sig = np.linalg.norm(work, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    work = work[:, order]
    v = v[:, order]
    u = np.zeros((m, n))
    cutoff = _EPS * max(m, n) * (sig[0] if sig.size else 0.0)
    good = sig > cutoff
    u[:, good] = work[:, good] / sig[good]
    if not good.all():
        # Complete U with an orthonormal basis of the complement of its good columns.
        qfull, _ = householder_qr(np.hstack([u[:, good], np.eye(m)]), mode="complete")
        k = int(good.sum())
        u[:, ~good] = qfull[:, k : k + int((~good).sum())]
    return u, sig, v.T


# Above this size the Jacobi sweeps (O(n^2) numpy calls each) dominate the
# calibration study's runtime, so the dispatchers hand off to LAPACK.
JACOBI_MAX_N = 40


def eigh(a):
    """Symmetric eigen-decomposition, ascending eigenvalues.

    Jacobi rotations up to ``JACOBI_MAX_N``; LAPACK (``numpy.linalg.eigh``)
    beyond that.
    """
    a = check_symmetric(a)
    if a.shape[0] <= JACOBI_MAX_N:
        return jacobi_eigh(a)
    return np.linalg.eigh(symmetrize(a))


def svd_square(a):
    """Singular value decomposition of a square matrix, same dispatch as :func:`eigh`."""
    a = as_square(a)
    if a.shape[0] <= JACOBI_MAX_N:
        return svd(a)
    return np.linalg.svd(a)


def sqrtm_spd(a) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix."""
    w, v = eigh(a)
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)
