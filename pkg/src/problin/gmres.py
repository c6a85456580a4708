"""Arnoldi, GMRES with Givens rotations, and its Bayesian readings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionViolation, SingularMatrixError
from .gaussian import GaussianVectorBelief
from .linalg import MAX_CONDITION, as_square, as_vector, cond_estimate, inv, solve_triangular, symmetrize
from .mbi import MatrixNormalBelief, mbi_posterior_right
from .report import EquivalenceReport
from .sbi import SbiProblem, sbi_optimality_gap, sbi_posterior
from .trace import SolverTrace

BREAKDOWN_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class ArnoldiFactorization:
    """``A Q[:, :m] = Q H_ext`` with orthonormal ``Q``.

    After a lucky breakdown at step ``m`` (``breakdown == m``) the Krylov
    space is invariant: ``Q`` has only ``m`` columns, the last row of
    ``H_ext`` is zero and ``A Q = Q H_ext[:m]``.  Reaching ``m == d`` is
    reported the same way.
    """

    Q: np.ndarray
    H_ext: np.ndarray
    m: int
    breakdown: int | None = None
    beta: float = 0.0

    @property
    def Qm(self) -> np.ndarray:
        return self.Q[:, : self.m]

    @property
    def Hm(self) -> np.ndarray:
        return self.H_ext[: self.m, : self.m]


def _check_system(A, v, name):
    a = as_square(A, "A")
    v = as_vector(v, name)
    if v.size != a.shape[0]:
        raise DimensionError(f"{name} has length {v.size}, A is {a.shape[0]}x{a.shape[0]}")
    return a, v


def arnoldi(A, r0, m: int) -> ArnoldiFactorization:
    """Orthonormal basis of ``K_m(A, r0)`` by modified Gram-Schmidt with reorthogonalization.

    Raises
    ------
    PreconditionViolation
        If ``r0`` is zero.
    """
    a, r0 = _check_system(A, r0, "r0")
    d = r0.size
    if not 0 <= m <= d:
        raise ValueError(f"iterations must be in [0, {d}], got {m}")
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        raise PreconditionViolation("Arnoldi needs a nonzero starting vector")
    tol = BREAKDOWN_TOL * float(np.linalg.norm(a))
    q = np.zeros((d, m + 1))
    h = np.zeros((m + 1, m))
    q[:, 0] = r0 / beta
    for j in range(m):
        w = a @ q[:, j]
        # Two MGS passes keep Q orthonormal when the Krylov space nearly closes.
        for _ in range(2):
            for i in range(j + 1):
                c = w @ q[:, i]
                h[i, j] += c
                w = w - c * q[:, i]
        h[j + 1, j] = np.linalg.norm(w)
        # At j + 1 == d the space is all of R^d, so w is round-off only.
        if h[j + 1, j] <= tol or j + 1 == d:
            h[j + 1, j] = 0.0
            return ArnoldiFactorization(q[:, : j + 1].copy(), h[: j + 2, : j + 1].copy(), j + 1, j + 1, beta)
        q[:, j + 1] = w / h[j + 1, j]
    return ArnoldiFactorization(q, h, m, None, beta)


def _givens(a, b):
    r = np.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def hessenberg_lstsq(h_ext, beta):
    """Minimize ``||beta e_1 - H_ext c||`` for every leading size at once.

    Returns
    -------
    coeffs : list of ndarray
        ``coeffs[j]`` solves the problem with the first ``j + 1`` columns.
    residuals : ndarray
        The minimal residual norms, starting with ``beta`` for zero columns.
    """
    h = np.array(h_ext, dtype=float)
    k = h.shape[1]
    g = np.zeros(h.shape[0])
    g[0] = beta
    coeffs, residuals = [], [abs(beta)]
    for j in range(k):
        # Rotations are applied to all later columns too, so column j already
        # carries rotations 0..j-1 when its own is computed.
        c, s = _givens(h[j, j], h[j + 1, j])
        h[j, j:], h[j + 1, j:] = c * h[j, j:] + s * h[j + 1, j:], -s * h[j, j:] + c * h[j + 1, j:]
        g[j], g[j + 1] = c * g[j] + s * g[j + 1], -s * g[j] + c * g[j + 1]
        coeffs.append(solve_triangular(np.triu(h[: j + 1, : j + 1]), g[: j + 1]))
        residuals.append(abs(g[j + 1]))
    return coeffs, np.array(residuals)


def gmres_solve(A, b, x0=None, m: int | None = None):
    """GMRES with ``m`` Arnoldi steps.

    Returns
    -------
    trace : SolverTrace
        Iterates ``x_j`` and true residual norms ``||b - A x_j||`` for
        ``j = 0..m``; ``extras["ls_residuals"]`` holds the small
        least-squares residuals.  ``converged_at`` marks a lucky breakdown.
    x : ndarray
        The final iterate.
    """
    a, b = _check_system(A, b, "b")
    d = b.size
    x0 = np.zeros(d) if x0 is None else _check_system(a, x0, "x0")[1]
    m = d if m is None else int(m)
    r0 = b - a @ x0
    trace = SolverTrace("gmres")
    trace.append(0, x0, np.linalg.norm(r0))
    if np.linalg.norm(r0) == 0.0:
        trace.converged_at = 0
        trace.extras["ls_residuals"] = [0.0]
        return trace, x0.copy()
    fact = arnoldi(a, r0, m)
    coeffs, ls_res = hessenberg_lstsq(fact.H_ext, fact.beta)
    x = x0
    for j, c in enumerate(coeffs, start=1):
        x = x0 + fact.Q[:, :j] @ c
        trace.append(j, x, np.linalg.norm(b - a @ x), direction=fact.Q[:, j - 1])
    trace.extras["ls_residuals"] = ls_res.tolist()
    trace.extras["arnoldi"] = fact
    if fact.breakdown is not None:
        trace.converged_at = fact.breakdown
    return trace, x


def _krylov(a, b, x0, m):
    fact = arnoldi(a, b - a @ x0, m)
    return fact, a @ fact.Qm


def ata_inverse(A) -> np.ndarray:
    """``(A^T A)^{-1}`` formed as ``A^{-1} A^{-T}``, which squares the condition number once instead of twice.

    Raises
    ------
    SingularMatrixError
        If the condition estimate of ``A^T A`` (the square of that of ``A``)
        reaches ``1e12``.
    """
    a = as_square(A, "A")
    kappa = cond_estimate(a) ** 2
    if not kappa < MAX_CONDITION:
        raise SingularMatrixError(f"A^T A is too ill-conditioned (condition estimate {kappa:.3e})")
    ainv = inv(a)
    return symmetrize(ainv @ ainv.T)


def bayes_gmres_left(A, b, x0=None, m: int | None = None, sigma0=None) -> GaussianVectorBelief:
    """SBI posterior under ``N(x0, (A^T A)^{-1})`` with directions ``A Q_m``.

    Its mean is the GMRES iterate.  ``sigma0`` lets a caller pass a
    precomputed ``(A^T A)^{-1}`` (or, for studies, a different prior
    covariance, in which case the mean no longer matches GMRES).
    """
    a, b = _check_system(A, b, "b")
    x0 = np.zeros(b.size) if x0 is None else as_vector(x0, "x0")
    m = b.size if m is None else int(m)
    sigma0 = ata_inverse(a) if sigma0 is None else sigma0
    problem = SbiProblem(a, b, GaussianVectorBelief(x0, sigma0))
    if m == 0 or np.linalg.norm(b - a @ x0) == 0.0:
        return problem.prior
    _, s = _krylov(a, b, x0, m)
    return sbi_posterior(problem, s)


def bayes_gmres_arnoldi_prior(A, b, x0=None, m: int | None = None) -> GaussianVectorBelief:
    """SBI posterior under ``N(x0, Q_m Q_m^T)`` with directions ``A Q_m``.

    The mean is the GMRES iterate and the covariance is zero: the prior
    already confines ``x`` to ``x0 + K_m``.
    """
    a, b = _check_system(A, b, "b")
    x0 = np.zeros(b.size) if x0 is None else as_vector(x0, "x0")
    m = b.size if m is None else int(m)
    if m == 0 or np.linalg.norm(b - a @ x0) == 0.0:
        return GaussianVectorBelief(x0, np.zeros((b.size, b.size)))
    fact, s = _krylov(a, b, x0, m)
    q = fact.Qm
    problem = SbiProblem(a, b, GaussianVectorBelief(x0, q @ q.T, psd_scale=float(q.shape[1])))
    return sbi_posterior(problem, s)


def bayes_gmres_right(A, b, m: int | None = None, x0=None, sigma=None) -> np.ndarray:
    """``A_m^{-1} b`` for the MBI prior ``N(0, Sigma kron I)`` given ``Y = A Q_m``.

    The posterior mean ``Q_m (Q_m^T A^T A Q_m)^{-1} Q_m^T A^T`` applied to
    ``b`` is GMRES started from zero.

    Raises
    ------
    PreconditionViolation
        If a nonzero ``x0`` is given: the correspondence only holds from zero.
    """
    a, b = _check_system(A, b, "b")
    d = b.size
    if x0 is not None and np.any(as_vector(x0, "x0") != 0.0):
        raise PreconditionViolation("right-multiplied Bayesian GMRES reproduces GMRES only for x0 = 0")
    m = d if m is None else int(m)
    if m == 0 or np.linalg.norm(b) == 0.0:
        return np.zeros(d)
    fact = arnoldi(a, b, m)
    q = fact.Qm
    sigma = np.eye(d) if sigma is None else sigma
    post = mbi_posterior_right(MatrixNormalBelief(np.zeros((d, d)), sigma, np.eye(d)), q, a @ q)
    return post.mean @ b


def cg_gmres_duality(A, b, x0=None, m: int = 1, n_candidates: int = 50, seed=0) -> EquivalenceReport:
    """For SPD ``A``: CG and GMRES are SBI under priors ``A^{-1}`` and ``(A^T A)^{-1}``.

    Each method's mean is checked to be optimal in its own prior's inverse
    norm (the ``A``-norm of the error for CG, the residual 2-norm for GMRES)
    over its own search space.  The report records both optimality gaps.
    """
    from .sbi import bayescg_solve, sigma0_inverse_prior

    a, b = _check_system(A, b, "b")
    x0 = np.zeros(b.size) if x0 is None else as_vector(x0, "x0")
    rng = np.random.default_rng(seed)
    report = EquivalenceReport("cg/gmres duality")

    cg_problem = SbiProblem(a, b, sigma0_inverse_prior(a, x0))
    trace, cg_post = bayescg_solve(cg_problem, m)
    s = trace.directions
    basis = cg_problem.sigma0 @ a.T @ s
    cands = x0 + rng.standard_normal((n_candidates, s.shape[1])) @ basis.T
    report.add("cg optimality (A-norm)", -min(sbi_optimality_gap(cg_problem, s, cands), 0.0), 1e-9)

    gm_problem = SbiProblem(a, b, GaussianVectorBelief(x0, ata_inverse(a)))
    fact, s = _krylov(a, b, x0, m)
    cands = x0 + rng.standard_normal((n_candidates, fact.m)) @ fact.Qm.T
    report.add("gmres optimality (residual norm)", -min(sbi_optimality_gap(gm_problem, s, cands), 0.0), 1e-9)
    report.notes.append("CG: prior covariance A^{-1}, minimizes ||x - x*||_A over x0 + K_m(A, r0)")
    report.notes.append("GMRES: prior covariance (A^T A)^{-1}, minimizes ||A x - b||_2 over x0 + K_m(A, r0)")
    return report
