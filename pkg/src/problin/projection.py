"""Projection methods, their SBI counterparts, and preconditioning transforms.

A projection method picks ``x_m`` in ``x0 + range(X)`` with residual
orthogonal to ``range(U)``.  Every SBI posterior mean is such an iterate and
every such iterate is an SBI posterior mean for a suitable prior; the report
functions here run both routes and record the gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, NotSPDError, PreconditionViolation, RankDeficiencyError, SingularMatrixError
from .gaussian import GaussianVectorBelief, prior_scale, pushforward
from .linalg import (
    MAX_CONDITION,
    SpdMatrix,
    as_matrix,
    as_square,
    as_vector,
    cond_estimate,
    inv,
    numerical_rank,
    solve,
    spd_inv,
    symmetrize,
)
from .report import EquivalenceReport
from .sbi import SbiProblem, SearchDirections, sbi_posterior

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """Solution basis ``X``, constraint basis ``U`` and starting point ``x0``."""

    X: np.ndarray
    U: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        x = as_matrix(self.X, "X")
        u = as_matrix(self.U, "U")
        x0 = as_vector(self.x0, "x0")
        if x.shape != u.shape or x.shape[0] != x0.size:
            raise DimensionError(f"X {x.shape}, U {u.shape} and x0 ({x0.size},) disagree")
        for name, basis in (("X", x), ("U", u)):
            if basis.shape[1] and numerical_rank(basis, RANK_TOL) < basis.shape[1]:
                raise RankDeficiencyError(f"{name} does not have full column rank")
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "x0", x0)

    @property
    def m(self) -> int:
        return self.X.shape[1]


def _nonsingular(p, name):
    p = as_square(p, name)
    kappa = cond_estimate(p)
    if not kappa < MAX_CONDITION:
        raise SingularMatrixError(f"{name} is singular or too ill-conditioned (condition estimate {kappa:.3e})")
    return p


@dataclass(frozen=True, eq=False)
class PreconditionerPair:
    """Left and right preconditioners; ``None`` stands for the identity.

    ``cheap_solves`` records whether systems with the preconditioners are
    considered inexpensive.  Matrices here are always dense, so the flag is
    informational.
    """

    Pl: np.ndarray | None = None
    Pr: np.ndarray | None = None
    cheap_solves: bool = True

    def __post_init__(self):
        for name in ("Pl", "Pr"):
            p = getattr(self, name)
            if p is not None:
                object.__setattr__(self, name, _nonsingular(p, name))

    def left(self, d: int) -> np.ndarray:
        return np.eye(d) if self.Pl is None else self.Pl

    def right(self, d: int) -> np.ndarray:
        return np.eye(d) if self.Pr is None else self.Pr

    def system(self, A, b):
        """The two-sided system ``(Pl A Pr, Pl b)``."""
        a = as_square(A, "A")
        d = a.shape[0]
        return self.left(d) @ a @ self.right(d), self.left(d) @ as_vector(b, "b")


def projection_step(A, b, spec: ProjectionSpec) -> np.ndarray:
    """``x0 + X (U^T A X)^{-1} U^T r0``.

    Raises
    ------
    SingularMatrixError
        If ``U^T A X`` is singular (Petrov-Galerkin breakdown).
    """
    a = as_square(A, "A")
    b = as_vector(b, "b")
    if a.shape[0] != b.size or spec.x0.size != b.size:
        raise DimensionError(f"A {a.shape}, b ({b.size},) and spec dimension {spec.x0.size} disagree")
    if spec.m == 0:
        return spec.x0.copy()
    small = spec.U.T @ a @ spec.X
    kappa = cond_estimate(small)
    if not kappa < MAX_CONDITION:
        raise SingularMatrixError(f"U^T A X is singular (condition estimate {kappa:.3e}): Petrov-Galerkin breakdown")
    return spec.x0 + spec.X @ solve(small, spec.U.T @ (b - a @ spec.x0))


def sbi_as_projection(problem: SbiProblem, S) -> ProjectionSpec:
    """The projection method ``X = Sigma0 A^T S``, ``U = S`` that shares the SBI mean."""
    s = S.S if isinstance(S, SearchDirections) else SearchDirections(S).S
    return ProjectionSpec(problem.sigma0 @ problem.A.T @ s, s, problem.x0)


def projection_as_sbi(spec: ProjectionSpec, A, b):
    """SBI problem with prior ``N(x0, X X^T)`` and directions ``U``.

    The posterior mean is the projection iterate; the posterior covariance
    is zero although ``x*`` is not identified, so it carries no calibrated
    uncertainty.

    Returns
    -------
    problem : SbiProblem
    directions : SearchDirections
    """
    cov = symmetrize(spec.X @ spec.X.T)
    prior = GaussianVectorBelief(spec.x0, cov, psd_scale=float(np.trace(cov)))
    return SbiProblem(A, b, prior), SearchDirections(spec.U)


def projection_as_sbi_structured(spec: ProjectionSpec, A, b, R, tol: float = 1e-10):
    """SBI problem with prior ``N(x0, (A^T R)^{-1})`` and directions ``U = R X``.

    Raises
    ------
    PreconditionViolation
        If ``U != R X``.
    NotSPDError
        If ``A^T R`` is not symmetric positive definite.
    """
    a = as_square(A, "A")
    r = as_square(R, "R")
    rx = r @ spec.X
    gap = np.abs(spec.U - rx).max() if spec.m else 0.0
    if gap > tol * max(1.0, np.abs(rx).max() if spec.m else 1.0):
        raise PreconditionViolation(f"U differs from R X (max gap {gap:.3e})")
    atr = a.T @ r
    try:
        SpdMatrix(atr)
    except ValueError as exc:
        raise NotSPDError(f"A^T R is not symmetric positive definite: {exc}") from None
    except NotSPDError:
        raise NotSPDError("A^T R is not positive definite") from None
    prior = GaussianVectorBelief(spec.x0, spd_inv(atr))
    return SbiProblem(a, b, prior), SearchDirections(spec.U)


def polar_constraint_spec(A, X, x0) -> tuple[ProjectionSpec, np.ndarray]:
    """``U = P X`` with ``P`` the orthogonal polar factor of ``A``; returns the spec and ``P``.

    With ``R = P`` the structured prior is ``(A^T P)^{-1} = H^{-1}``.
    """
    from .linalg import polar_decompose

    p, _ = polar_decompose(A)
    x = as_matrix(X, "X")
    return ProjectionSpec(x, p @ x, x0), p


def _gaps(report, a_belief, b_belief, tol, cov=True):
    report.add("mean", np.abs(a_belief.mean - b_belief.mean).max(), tol)
    if cov:
        report.add("cov", np.abs(a_belief.cov - b_belief.cov).max(), tol)


def sbi_projection_report(problem: SbiProblem, S, tol: float = 1e-9) -> EquivalenceReport:
    """SBI mean versus the projection iterate with ``X = Sigma0 A^T S``, ``U = S``."""
    report = EquivalenceReport("sbi -> projection")
    spec = sbi_as_projection(problem, S)
    x = projection_step(problem.A, problem.b, spec)
    report.add("mean", np.abs(sbi_posterior(problem, spec.U).mean - x).max(), tol)
    return report


def projection_sbi_report(spec: ProjectionSpec, A, b, tol: float = 1e-8) -> EquivalenceReport:
    """Projection iterate versus the SBI mean under ``N(x0, X X^T)``; also checks the zero covariance."""
    report = EquivalenceReport("projection -> sbi")
    problem, s = projection_as_sbi(spec, A, b)
    post = sbi_posterior(problem, s)
    report.add("mean", np.abs(post.mean - projection_step(A, b, spec)).max(), tol)
    report.add("cov sup-norm", np.abs(post.cov).max(), tol)
    if spec.m < spec.x0.size:
        report.notes.append(
            "calibration warning: zero posterior covariance although x* is not identified "
            f"({spec.x0.size - spec.m} unobserved dimensions)"
        )
    return report


def structured_report(spec: ProjectionSpec, A, b, R, tol: float = 1e-8) -> EquivalenceReport:
    """Projection iterate versus the SBI mean under ``N(x0, (A^T R)^{-1})``."""
    report = EquivalenceReport("projection -> sbi (A^T R)^{-1}")
    problem, s = projection_as_sbi_structured(spec, A, b, R)
    post = sbi_posterior(problem, s)
    report.add("mean", np.abs(post.mean - projection_step(A, b, spec)).max(), tol)
    report.notes.append(f"posterior covariance trace {np.trace(post.cov):.6g} (not zero in general)")
    return report


@dataclass(frozen=True, eq=False)
class RightPreconditioned:
    """The ``z``-space problem ``(A Pr, b)`` and the map back to ``x = Pr z``."""

    problem: SbiProblem
    Pr: np.ndarray

    def pullback(self, belief: GaussianVectorBelief) -> GaussianVectorBelief:
        return pushforward(belief, self.Pr)

    def pullback_vector(self, z) -> np.ndarray:
        return self.Pr @ as_vector(z, "z")


def precondition_right(problem: SbiProblem, Pr) -> RightPreconditioned:
    """Rewrite ``A x = b`` with prior ``N(x0, Sigma0)`` as ``A Pr z = b``.

    The ``z`` prior is ``N(Pr^{-1} x0, Pr^{-1} Sigma0 Pr^{-T})``, so that its
    pushforward through ``Pr`` is the original prior.
    """
    pr = _nonsingular(Pr, "Pr")
    if pr.shape[0] != problem.dim:
        raise DimensionError(f"Pr is {pr.shape[0]}x{pr.shape[0]}, system dimension is {problem.dim}")
    pr_inv = inv(pr)
    prior = GaussianVectorBelief(
        pr_inv @ problem.x0, symmetrize(pr_inv @ problem.sigma0 @ pr_inv.T), psd_scale=0.0
    )
    return RightPreconditioned(SbiProblem(problem.A @ pr, problem.b, prior), pr)


def right_preconditioning_report(problem: SbiProblem, Pr, S, tol: float = 1e-8) -> EquivalenceReport:
    """Solve in ``z`` and pull back, versus solving in ``x`` directly, with the same ``S``."""
    report = EquivalenceReport("right preconditioning")
    transformed = precondition_right(problem, Pr)
    via_z = transformed.pullback(sbi_posterior(transformed.problem, S))
    _gaps(report, via_z, sbi_posterior(problem, S), tol)
    return report


def precondition_left(problem: SbiProblem, Pl, S, tol: float = 1e-8) -> EquivalenceReport:
    """SBI on ``(Pl A, Pl b)`` with ``S`` versus SBI on ``(A, b)`` with ``Pl^T S``."""
    pl = _nonsingular(Pl, "Pl")
    if pl.shape[0] != problem.dim:
        raise DimensionError(f"Pl is {pl.shape[0]}x{pl.shape[0]}, system dimension is {problem.dim}")
    s = S.S if isinstance(S, SearchDirections) else SearchDirections(S).S
    report = EquivalenceReport("left preconditioning")
    left = SbiProblem(pl @ problem.A, pl @ problem.b, problem.prior)
    _gaps(report, sbi_posterior(left, s), sbi_posterior(problem, pl.T @ s), tol)
    return report


def solve_two_sided(problem: SbiProblem, pair: PreconditionerPair, S) -> GaussianVectorBelief:
    """SBI on ``Pl A Pr z = Pl b`` with directions ``S``, pulled back to ``x``."""
    d = problem.dim
    pl, pr = pair.left(d), pair.right(d)
    transformed = precondition_right(SbiProblem(pl @ problem.A, pl @ problem.b, problem.prior), pr)
    return transformed.pullback(sbi_posterior(transformed.problem, S))


def two_sided_report(problem: SbiProblem, pair: PreconditionerPair, S, tol: float = 1e-8) -> EquivalenceReport:
    """Two-sided solve versus plain SBI on ``(A, b)`` with directions ``Pl^T S``.

    The left transform moves ``Pl`` into the directions and the right
    transform moves ``Pr`` into the prior; composing both gives plain SBI.
    """
    s = S.S if isinstance(S, SearchDirections) else SearchDirections(S).S
    report = EquivalenceReport("two-sided preconditioning")
    direct = solve_two_sided(problem, pair, s)
    composed = sbi_posterior(problem, pair.left(problem.dim).T @ s)
    _gaps(report, direct, composed, tol)
    return report


def preconditioned_directions(pair: PreconditionerPair, d: int) -> Callable[[np.ndarray], np.ndarray]:
    """Map directions chosen for the preconditioned system to the original one."""
    pl = pair.left(d)
    return lambda s: pl.T @ as_matrix(s, "S")
