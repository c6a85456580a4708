"""Matrix-based inference: Gaussian beliefs over ``H = A^{-1}``.

Covariances are Kronecker factored under row-stacking ``vec``:
``Cov(H[i, j], H[k, l]) = left_cov[i, k] * right_cov[j, l]``.  Right-multiplied
information ``S = H Y`` updates ``right_cov``; left-multiplied information
``S^T = Y^T H`` updates ``left_cov``.  Nothing here materializes a
``d^2 x d^2`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, DimensionError, PreconditionViolation, RankDeficiencyError
from .gaussian import GaussianVectorBelief
from .linalg import (
    as_matrix,
    as_square,
    as_vector,
    check_psd,
    check_symmetric,
    eigh,
    spd_inv,
    symmetrize,
)
from .report import EquivalenceReport
from .sbi import SbiProblem, SearchDirections, sbi_posterior
from .trace import SolverTrace

GRAM_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MatrixNormalBelief:
    """``vec(H) ~ N(vec(mean), left_cov kron right_cov)``."""

    mean: np.ndarray
    left_cov: np.ndarray
    right_cov: np.ndarray

    def __post_init__(self):
        mean = as_square(self.mean, "mean")
        d = mean.shape[0]
        for name in ("left_cov", "right_cov"):
            c = as_matrix(getattr(self, name), name)
            if c.shape != (d, d):
                raise DimensionError(f"{name} has shape {c.shape}, expected ({d}, {d})")
            object.__setattr__(self, name, symmetrize(check_psd(c, name=name)))
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class SymmetricMatrixBelief:
    """Belief over a symmetric ``H`` with covariance ``w (symkron) w``."""

    mean: np.ndarray
    w: np.ndarray
    _psd_scale: float = field(default=0.0, repr=False)

    def __post_init__(self):
        mean = check_symmetric(self.mean, 1e-10, "mean")
        w = check_symmetric(self.w, 1e-10, "w")
        if w.shape != mean.shape:
            raise DimensionError(f"w has shape {w.shape}, mean has {mean.shape}")
        check_psd(w, name="w", scale=self._psd_scale)
        object.__setattr__(self, "mean", symmetrize(mean))
        object.__setattr__(self, "w", symmetrize(w))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _gram_solve(gram, rhs, what):
    """Solve with an SPD Gram matrix, rejecting (numerically) singular ones.

    The rank test runs on the unit-diagonal scaling of the Gram matrix:
    observation columns of very different length (CG steps shrink
    geometrically) are badly scaled, not dependent.
    """
    gram = symmetrize(gram)
    diag = np.diag(gram)
    if diag.size and diag.min() <= 0.0:
        raise RankDeficiencyError(f"{what} is singular")
    scale = 1.0 / np.sqrt(diag)
    w, v = eigh(symmetrize(gram * np.outer(scale, scale)))
    if w.size and w.min() <= GRAM_RANK_TOL * w.max():
        raise RankDeficiencyError(f"{what} is singular")
    srhs = rhs * (scale[:, None] if np.ndim(rhs) == 2 else scale)
    sol = v @ ((v.T @ srhs) / (w[:, None] if np.ndim(rhs) == 2 else w))
    return sol * (scale[:, None] if np.ndim(rhs) == 2 else scale)


def _obs_pair(d, S, Y):
    s = as_matrix(S, "S")
    y = as_matrix(Y, "Y")
    if s.shape != y.shape or s.shape[0] != d:
        raise DimensionError(f"S {s.shape} and Y {y.shape} must both be ({d}, m)")
    return s, y


def mbi_posterior_right(belief: MatrixNormalBelief, S, Y) -> MatrixNormalBelief:
    """Condition on right-multiplied information ``S = H Y``.

    The caller guarantees ``Y = A S``.  Only the right factor changes:
    ``H_m = H_0 + (S - H_0 Y) G Y^T W_0`` and
    ``W_m = W_0 - W_0 Y G Y^T W_0`` with ``G = (Y^T W_0 Y)^{-1}``.
    """
    s, y = _obs_pair(belief.dim, S, Y)
    if s.shape[1] == 0:
        return belief
    w0 = belief.right_cov
    w0y = w0 @ y
    gyw = _gram_solve(y.T @ w0y, w0y.T, "Y^T W0 Y")
    mean = belief.mean + (s - belief.mean @ y) @ gyw
    w_m = w0 - w0y @ gyw
    return MatrixNormalBelief(mean, belief.left_cov, _clean_psd(w_m, w0))


def mbi_posterior_left(belief: MatrixNormalBelief, S, Y) -> MatrixNormalBelief:
    """Condition on left-multiplied information ``S^T = Y^T H``.

    The caller guarantees ``Y^T = S^T A``.  Only the left factor changes:
    ``H_m = H_0 + Sigma_0 Y G (S^T - Y^T H_0)`` and
    ``Sigma_m = Sigma_0 - Sigma_0 Y G Y^T Sigma_0`` with ``G = (Y^T Sigma_0 Y)^{-1}``.
    """
    s, y = _obs_pair(belief.dim, S, Y)
    if s.shape[1] == 0:
        return belief
    sig0 = belief.left_cov
    sy = sig0 @ y
    gys = _gram_solve(y.T @ sy, sy.T, "Y^T Sigma0 Y")
    mean = belief.mean + gys.T @ (s.T - y.T @ belief.mean)
    sig_m = sig0 - sy @ gys
    return MatrixNormalBelief(mean, _clean_psd(sig_m, sig0), belief.right_cov)


def _clean_psd(c, prior):
    # Posterior factors can carry round-off of the prior's size; symmetrize and
    # zero out anything below that noise level so the PSD check is meaningful.
    c = symmetrize(c)
    noise = 1e-13 * max(float(np.trace(prior)), 0.0)
    w, v = eigh(c)
    if w.min() >= 0.0 or w.min() < -1e3 * noise:
        return c
    w = np.where(np.abs(w) <= 1e3 * noise, np.clip(w, 0.0, None), w)
    return symmetrize((v * w) @ v.T)


def solution_marginal(belief: MatrixNormalBelief, b) -> GaussianVectorBelief:
    """Law of ``x = H b``: ``N(H_m b, (b^T W b) Sigma)``."""
    b = as_vector(b, "b")
    if b.size != belief.dim:
        raise DimensionError(f"b has length {b.size}, belief dimension is {belief.dim}")
    scale = float(b @ belief.right_cov @ b)
    return GaussianVectorBelief(belief.mean @ b, scale * belief.left_cov)


def normalized_right_cov(w_bar, b) -> np.ndarray:
    """Rescale ``w_bar`` so that ``b^T W b = 1``."""
    w_bar = as_square(w_bar, "w_bar")
    b = as_vector(b, "b")
    return w_bar / float(b @ w_bar @ b)


def sbi_equivalence_check(
    mbi_prior: MatrixNormalBelief,
    problem: SbiProblem,
    S,
    tol: float = 1e-8,
    precondition_tol: float = 1e-10,
) -> EquivalenceReport:
    """Compare the MBI solution marginal under left-multiplied information with SBI.

    The two agree when ``H_0 b = x_0``, ``b^T W_0 b = 1`` and the left factor
    equals the SBI prior covariance.  Violated hypotheses are listed in the
    report (and make it fail) but the gaps are still computed.
    """
    s = S.S if isinstance(S, SearchDirections) else SearchDirections(S).S
    a, b = problem.A, problem.b
    report = EquivalenceReport("mbi-left vs sbi")
    mean_gap0 = np.abs(mbi_prior.mean @ b - problem.x0).max()
    if mean_gap0 > precondition_tol * max(1.0, np.abs(problem.x0).max()):
        report.violations.append(f"H0 b != x0 (max gap {mean_gap0:.3e})")
    bwb = float(b @ mbi_prior.right_cov @ b)
    if abs(bwb - 1.0) > precondition_tol:
        report.violations.append(f"b^T W0 b = {bwb:.12g}, not 1")
    sig_gap = np.abs(mbi_prior.left_cov - problem.sigma0).max()
    if sig_gap > precondition_tol * max(1.0, np.abs(problem.sigma0).max()):
        report.violations.append(f"MBI left covariance differs from the SBI prior covariance ({sig_gap:.3e})")

    y = a.T @ s
    marginal = solution_marginal(mbi_posterior_left(mbi_prior, s, y), b)
    sbi = sbi_posterior(problem, s)
    report.add("mean", np.abs(marginal.mean - sbi.mean).max(), tol)
    report.add("cov", np.abs(marginal.cov - sbi.cov).max(), tol)
    sbi_tr = float(np.trace(sbi.cov))
    if sbi_tr > 0.0:
        report.notes.append(f"marginal/SBI covariance trace ratio {np.trace(marginal.cov) / sbi_tr:.12g}")
    return report


def _symkron_update(h0, w, s, y):
    """Posterior mean and ``W Y G`` pieces for :func:`symkron_posterior`."""
    wy = w @ y
    g_ywt = _gram_solve(y.T @ wy, wy.T, "Y^T W Y")  # G Y^T W
    delta = s - h0 @ y
    correction = delta @ g_ywt
    mean = h0 + correction + correction.T - g_ywt.T @ (y.T @ delta) @ g_ywt
    return symmetrize(mean), wy, g_ywt


def symkron_posterior(belief: SymmetricMatrixBelief, S, Y) -> SymmetricMatrixBelief:
    """Condition a symmetric-Kronecker belief on ``S = H Y``.

    With ``G = (Y^T W Y)^{-1}`` and ``D = S - H_0 Y`` the posterior mean is
    ``H_0 + D G Y^T W + W Y G D^T - W Y G (Y^T D) G Y^T W`` (a symmetric
    rank-2m update) and the covariance factor is ``W - W Y G Y^T W``.  When
    ``S`` and ``Y`` are consistent with a symmetric matrix the mean
    reproduces the observations, ``H_m Y = S``.
    """
    s, y = _obs_pair(belief.dim, S, Y)
    if s.shape[1] == 0:
        return belief
    mean, wy, g_ywt = _symkron_update(belief.mean, belief.w, s, y)
    w_post = _clean_psd(belief.w - wy @ g_ywt, belief.w)
    return SymmetricMatrixBelief(mean, w_post, _psd_scale=max(belief._psd_scale, float(np.trace(belief.w))))


def mbi_cg_solve(A, b, alpha=1.0, beta=1.0, gamma=0.0, m=None, validation=False) -> SolverTrace:
    """Right-multiplied matrix-based CG.

    Prior ``H ~ N(alpha I, W (symkron) W)`` with ``W = beta I + gamma A^{-1}``.
    Each iteration takes the direction ``d_i = -H_{i-1} r_{i-1}`` from the
    current posterior mean, observes ``z_i = A d_i``, rescales both by the
    exact line-search step and re-conditions on all (s, y) pairs so far.
    ``r`` is the gradient ``A x - b``.

    ``gamma > 0`` needs a dense ``A^{-1}`` and is allowed only with
    ``validation=True``.

    Returns
    -------
    SolverTrace
        Records hold ``x_i`` and ``s_i``; ``extras`` holds the lists ``d``,
        ``r`` (gradients, starting with ``r_0``), ``step`` (the ``alpha_i``)
        and ``H`` (posterior means ``H_i``, starting with ``H_0``).

    Raises
    ------
    BreakdownError
        If ``d_i^T A d_i <= 0``: ``A`` is not positive definite along the
        current direction.  Symmetry is checked up front, definiteness only
        through this test.
    """
    a = as_square(A, "A")
    b = as_vector(b, "b")
    n = b.size
    if a.shape[0] != n:
        raise DimensionError(f"b has length {n}, A is {a.shape[0]}x{a.shape[0]}")
    m = n if m is None else int(m)
    if not 0 <= m <= n:
        raise ValueError(f"iterations must be in [0, {n}], got {m}")
    if alpha == 0.0:
        raise PreconditionViolation("prior mean scale alpha must be nonzero")
    if beta < 0.0 or gamma < 0.0 or beta + gamma <= 0.0:
        raise PreconditionViolation("need beta, gamma >= 0 with beta + gamma > 0")
    a = check_symmetric(a, 1e-10, "A")
    w = beta * np.eye(n)
    if gamma > 0.0:
        if not validation:
            raise PreconditionViolation("gamma > 0 requires A^{-1}; pass validation=True to allow a dense inverse")
        w = w + gamma * spd_inv(a)
    belief = SymmetricMatrixBelief(alpha * np.eye(n), w)

    # Line 11 only needs the posterior mean, so the covariance factor is not formed.
    h = belief.mean
    x = h @ b
    r = a @ x - b
    trace = SolverTrace("mbi-cg")
    trace.extras = {"d": [], "r": [r.copy()], "step": [], "H": [h.copy()]}
    trace.append(0, x, np.linalg.norm(r))
    b_norm = max(np.linalg.norm(b), np.finfo(float).tiny)
    s_cols, y_cols = [], []
    for i in range(1, m + 1):
        if np.linalg.norm(r) <= 1e-13 * b_norm:
            trace.converged_at = i - 1
            break
        d = -h @ r
        z = a @ d
        curvature = float(d @ z)
        if curvature <= 0.0:
            raise BreakdownError(f"iteration {i}: d^T A d = {curvature:.3e} <= 0, lost positive definiteness")
        step = -float(d @ r) / curvature
        s = step * d
        y = step * z
        x = x + s
        r = r + y
        s_cols.append(s)
        y_cols.append(y)
        h, _, _ = _symkron_update(belief.mean, belief.w, np.column_stack(s_cols), np.column_stack(y_cols))
        trace.append(i, x, np.linalg.norm(r), direction=s)
        trace.extras["d"].append(d)
        trace.extras["r"].append(r.copy())
        trace.extras["step"].append(step)
        trace.extras["H"].append(h.copy())
    return trace
