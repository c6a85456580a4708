"""Gaussian beliefs over vectors: linear pushforward and linear conditioning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import as_matrix, as_vector, check_psd, eigh, pseudo_solve, symmetrize

DEFAULT_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianVectorBelief:
    """``N(mean, cov)`` with a symmetric positive semi-definite ``cov``.

    ``psd_scale`` is only used during validation: beliefs derived from a
    prior pass the prior's trace so that round-off in a nearly zero
    posterior covariance is judged against the prior's size.
    """

    mean: np.ndarray
    cov: np.ndarray
    psd_scale: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        mean = as_vector(self.mean, "mean").copy()
        cov = as_matrix(self.cov, "cov")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        cov = symmetrize(check_psd(cov, scale=self.psd_scale))
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng, size=None) -> np.ndarray:
        """Draw samples through a PSD square root, so singular covariances work."""
        w, v = eigh(self.cov)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.dim))
        out = self.mean + z @ root.T
        return out[0] if size is None else out


def _observation_args(belief, m, z):
    m = as_matrix(m, "observation operator")
    if m.shape[1] != belief.dim:
        raise DimensionError(f"operator has {m.shape[1]} columns, belief has dimension {belief.dim}")
    z = np.zeros(m.shape[0]) if z is None else as_vector(z, "offset")
    if z.size != m.shape[0]:
        raise DimensionError(f"offset length {z.size} does not match operator rows {m.shape[0]}")
    return m, z


def pushforward(belief: GaussianVectorBelief, m, z=None) -> GaussianVectorBelief:
    """Law of ``M x + z`` for ``x ~ belief``."""
    m, z = _observation_args(belief, m, z)
    scale = belief.psd_scale + float(np.trace(belief.cov)) * float(np.sum(m * m))
    return GaussianVectorBelief(m @ belief.mean + z, m @ belief.cov @ m.T, psd_scale=scale)


def condition(
    belief: GaussianVectorBelief,
    m,
    y,
    z=None,
    noise=None,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> GaussianVectorBelief:
    """Condition ``x ~ belief`` on ``y ~ N(M x + z, noise)``.

    ``noise`` may be omitted for exact observations.  When the innovation
    covariance ``M Sigma M^T + noise`` is singular its pseudo-inverse is used
    (eigenvalues at or below ``rank_tol * lambda_max`` are dropped), which
    makes redundant exact observations harmless.
    """
    m, z = _observation_args(belief, m, z)
    y = as_vector(y, "observation")
    n = m.shape[0]
    if y.size != n:
        raise DimensionError(f"observation length {y.size} does not match operator rows {n}")
    if n == 0:
        return belief
    cross = belief.cov @ m.T
    gram = m @ cross
    if noise is not None:
        noise = check_psd(as_matrix(noise, "noise"), name="noise")
        if noise.shape != (n, n):
            raise DimensionError(f"noise shape {noise.shape} does not match {n} observations")
        gram = gram + noise
    gram = symmetrize(gram)
    innovation = y - m @ belief.mean - z
    mean = belief.mean + cross @ pseudo_solve(gram, innovation, rank_tol)
    cov = belief.cov - cross @ pseudo_solve(gram, cross.T, rank_tol)
    return GaussianVectorBelief(mean, symmetrize(cov), psd_scale=prior_scale(belief))


def prior_scale(belief: GaussianVectorBelief) -> float:
    """Reference size for PSD checks on beliefs derived from ``belief``."""
    return max(belief.psd_scale, float(np.trace(belief.cov)))
