"""Solution-based inference: a Gaussian prior on ``x*`` conditioned on ``S^T A x* = S^T b``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionViolation, RankDeficiencyError, SingularMatrixError
from .gaussian import GaussianVectorBelief, condition, prior_scale
from .linalg import (
    MAX_CONDITION,
    as_matrix,
    as_square,
    as_vector,
    cholesky,
    cond_estimate,
    eigh,
    lstsq,
    numerical_rank,
    solve,
    solve_triangular,
    spd_inv,
    symmetrize,
)
from .trace import SolverTrace

RANK_TOL = 1e-10
GRAM_RANK_TOL = 1e-12
BREAKDOWN_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class SbiProblem:
    """A linear system ``A x = b`` together with a Gaussian prior on its solution."""

    A: np.ndarray
    b: np.ndarray
    prior: GaussianVectorBelief

    def __post_init__(self):
        a = as_square(self.A, "A")
        b = as_vector(self.b, "b")
        if b.size != a.shape[0]:
            raise DimensionError(f"b has length {b.size}, A is {a.shape[0]}x{a.shape[0]}")
        if self.prior.dim != b.size:
            raise DimensionError(f"prior has dimension {self.prior.dim}, system has {b.size}")
        kappa = cond_estimate(a)
        if not kappa < MAX_CONDITION:
            raise SingularMatrixError(f"A is singular or too ill-conditioned (condition estimate {kappa:.3e})")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def x0(self) -> np.ndarray:
        return self.prior.mean

    @property
    def sigma0(self) -> np.ndarray:
        return self.prior.cov

    def solution(self) -> np.ndarray:
        return solve(self.A, self.b)

    def residual(self, x) -> np.ndarray:
        return self.b - self.A @ x


@dataclass(frozen=True, eq=False)
class SearchDirections:
    """Linearly independent search directions stored as the columns of ``S``."""

    S: np.ndarray

    def __post_init__(self):
        s = as_matrix(self.S, "search directions")
        if s.shape[1] > s.shape[0]:
            raise DimensionError(f"{s.shape[1]} directions exceed the dimension {s.shape[0]}")
        if s.shape[1] and numerical_rank(s, RANK_TOL) < s.shape[1]:
            raise RankDeficiencyError("search directions are linearly dependent")
        object.__setattr__(self, "S", s)

    @property
    def m(self) -> int:
        return self.S.shape[1]

    @classmethod
    def empty(cls, d: int) -> "SearchDirections":
        return cls(np.zeros((d, 0)))


def _directions(problem, s) -> np.ndarray:
    s = s.S if isinstance(s, SearchDirections) else SearchDirections(s).S
    if s.shape[0] != problem.dim:
        raise DimensionError(f"directions have {s.shape[0]} rows, system dimension is {problem.dim}")
    return s


def _check_gram(gram: np.ndarray) -> None:
    if gram.shape[0] == 0:
        return
    w, _ = eigh(symmetrize(gram))
    if w.max() <= 0.0 or w.min() <= GRAM_RANK_TOL * w.max():
        raise RankDeficiencyError(
            "S^T A Sigma0 A^T S is singular: dependent directions or a degenerate prior"
        )


def sbi_posterior(problem: SbiProblem, S) -> GaussianVectorBelief:
    """Posterior over ``x*`` after observing ``S^T A x* = S^T b`` exactly.

    Delegates to :func:`gaussian.condition` with operator ``S^T A``.

    Raises
    ------
    RankDeficiencyError
        If the Gram matrix ``S^T A Sigma0 A^T S`` is singular.
    """
    s = _directions(problem, S)
    if s.shape[1] == 0:
        return problem.prior
    m_op = s.T @ problem.A
    _check_gram(m_op @ problem.sigma0 @ m_op.T)
    return condition(problem.prior, m_op, s.T @ problem.b)


def _sigma0_norm(low, v):
    # low is the Cholesky factor of Sigma0; ||v||_{Sigma0^{-1}} = ||L^{-1} v||.
    return float(np.linalg.norm(solve_triangular(low, v, lower=True)))


def sbi_optimality_gap(problem: SbiProblem, S, candidates, tol: float = 1e-8) -> float:
    """Best candidate's ``Sigma0^{-1}``-error minus the posterior mean's.

    Every candidate must lie in ``x0 + Sigma0 A^T range(S)``; the posterior
    mean minimizes the error over that affine space, so the result is
    non-negative up to round-off.

    Parameters
    ----------
    candidates : (k, d) array_like
        Candidate points, one per row.
    tol : float
        Relative projection residual above which a candidate is rejected.
    """
    s = _directions(problem, S)
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    if cands.shape[1] != problem.dim:
        raise DimensionError(f"candidates have length {cands.shape[1]}, system dimension is {problem.dim}")
    basis = problem.sigma0 @ problem.A.T @ s
    offsets = cands - problem.x0
    if basis.shape[1]:
        coeffs = lstsq(basis, offsets.T)
        resid = offsets.T - basis @ coeffs
    else:
        resid = offsets.T
    scale = np.maximum(np.linalg.norm(offsets, axis=1), np.linalg.norm(problem.x0) + 1.0)
    bad = np.linalg.norm(resid, axis=0) > tol * scale
    if bad.any():
        raise PreconditionViolation(
            f"{int(bad.sum())} candidate(s) lie outside x0 + Sigma0 A^T range(S)"
        )
    low = cholesky(problem.sigma0)
    x_true = problem.solution()
    xm = sbi_posterior(problem, s).mean
    best = min(_sigma0_norm(low, c - x_true) for c in cands)
    return best - _sigma0_norm(low, xm - x_true)


def _bayescg_steps(problem: SbiProblem, m: int):
    """Yield ``(j, x_j, Sigma_j, s_j)`` for the BayesCG recursion, stopping at breakdown.

    The first direction is normalized in the ``A Sigma0 A^T`` norm, the same
    norm as every later one, so the returned set is ``A Sigma0 A^T``-orthonormal.
    """
    if not 0 <= m <= problem.dim:
        raise ValueError(f"iterations must be in [0, {problem.dim}], got {m}")
    a, sigma0 = problem.A, problem.sigma0
    sig_at = sigma0 @ a.T
    inner = symmetrize(a @ sig_at)
    x = problem.x0.copy()
    cov = sigma0.copy()
    r = problem.residual(x)
    s_prev = None
    for j in range(1, m + 1):
        s_tilde = r if s_prev is None else r - (r @ inner @ s_prev) * s_prev
        norm = np.sqrt(max(float(s_tilde @ inner @ s_tilde), 0.0))
        if norm <= BREAKDOWN_TOL:
            return
        s = s_tilde / norm
        v = sig_at @ s
        x = x + v * (s @ r)
        cov = cov - np.outer(v, v)
        r = problem.residual(x)
        s_prev = s
        yield j, x, cov, s


def bayescg_directions(problem: SbiProblem, m: int) -> SearchDirections:
    """The first ``m`` BayesCG search directions (fewer if the method converges)."""
    cols = [s for _, _, _, s in _bayescg_steps(problem, m)]
    if not cols:
        return SearchDirections.empty(problem.dim)
    return SearchDirections(np.column_stack(cols))


def bayescg_solve(problem: SbiProblem, m: int):
    """Run ``m`` BayesCG iterations with rank-one mean and covariance updates.

    Returns
    -------
    trace : SolverTrace
        Iterates, residual norms, covariance traces and directions; entry 0
        is the prior.  ``converged_at`` is set if the directions broke down.
    belief : GaussianVectorBelief
        The final posterior.
    """
    trace = SolverTrace("bayescg")
    x, cov = problem.x0, problem.sigma0
    trace.append(0, x, np.linalg.norm(problem.residual(x)), np.trace(cov))
    last = 0
    for j, x, cov, s in _bayescg_steps(problem, m):
        trace.append(j, x, np.linalg.norm(problem.residual(x)), np.trace(cov), s)
        last = j
    if last < m:
        trace.converged_at = last
    return trace, GaussianVectorBelief(x, symmetrize(cov), psd_scale=prior_scale(problem.prior))


def sigma0_inverse_prior(A, x0=None) -> GaussianVectorBelief:
    """Prior ``N(x0, A^{-1})`` under which BayesCG reproduces CG.

    Validation only: it needs a dense inverse of ``A``, which a practical
    solver would never have.
    """
    a = as_square(A, "A")
    x0 = np.zeros(a.shape[0]) if x0 is None else as_vector(x0, "x0")
    return GaussianVectorBelief(x0, spd_inv(a))

