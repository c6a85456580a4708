"""Probabilistic linear solvers on dense matrices."""

from .calibration import EnsembleConfig, run_calibration_study, z_statistic
from .errors import (
    BreakdownError,
    DimensionError,
    NotSPDError,
    NotSymmetricError,
    PreconditionViolation,
    ProblinError,
    RankDeficiencyError,
    SingularMatrixError,
)
from .gaussian import GaussianVectorBelief, condition, pushforward
from .gmres import (
    arnoldi,
    bayes_gmres_arnoldi_prior,
    bayes_gmres_left,
    bayes_gmres_right,
    gmres_solve,
)
from .mbi import (
    MatrixNormalBelief,
    SymmetricMatrixBelief,
    mbi_cg_solve,
    mbi_posterior_left,
    mbi_posterior_right,
    symkron_posterior,
)
from .projection import PreconditionerPair, ProjectionSpec, projection_step
from .report import EquivalenceReport
from .sbi import SbiProblem, SearchDirections, bayescg_solve, sbi_posterior
from .trace import SolverTrace

__version__ = "0.1.0"

__all__ = [
    "BreakdownError",
    "DimensionError",
    "EnsembleConfig",
    "EquivalenceReport",
    "GaussianVectorBelief",
    "MatrixNormalBelief",
    "NotSPDError",
    "NotSymmetricError",
    "PreconditionViolation",
    "PreconditionerPair",
    "ProblinError",
    "ProjectionSpec",
    "RankDeficiencyError",
    "SbiProblem",
    "SearchDirections",
    "SingularMatrixError",
    "SolverTrace",
    "SymmetricMatrixBelief",
    "arnoldi",
    "bayes_gmres_arnoldi_prior",
    "bayes_gmres_left",
    "bayes_gmres_right",
    "bayescg_solve",
    "condition",
    "gmres_solve",
    "mbi_cg_solve",
    "mbi_posterior_left",
    "mbi_posterior_right",
    "projection_step",
    "pushforward",
    "run_calibration_study",
    "sbi_posterior",
    "symkron_posterior",
    "z_statistic",
]
