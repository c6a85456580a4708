"""Exception hierarchy shared by every solver module."""

import numpy as np


class ProblinError(Exception):
    """Base class for all library errors."""


class DimensionError(ProblinError, ValueError):
    """Operand shapes do not agree."""


class NotSymmetricError(ProblinError, ValueError):
    pass


class NotSPDError(ProblinError, np.linalg.LinAlgError):
    """Matrix failed a symmetric positive-definiteness check."""


class SingularMatrixError(ProblinError, np.linalg.LinAlgError):
    """Matrix is singular or numerically rank deficient."""


class RankDeficiencyError(ProblinError, np.linalg.LinAlgError):
    """A Gram matrix that must be invertible is not."""


class BreakdownError(ProblinError, ArithmeticError):
    """An iterative method cannot continue (e.g. loss of positive definiteness)."""


class PreconditionViolation(ProblinError, ValueError):
    """Inputs do not satisfy the hypotheses an operation relies on."""
