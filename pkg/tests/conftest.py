import numpy as np
import pytest

from problin.linalg import random_haar_orthogonal


def random_spd(d, rng, low=1.0, high=10.0):
    """SPD matrix with Haar eigenvectors and eigenvalues uniform in [low, high]."""
    q = random_haar_orthogonal(d, rng)
    return (q * rng.uniform(low, high, d)) @ q.T


def random_nonsymmetric(d, rng):
    """Well-conditioned nonsymmetric matrix: identity-dominated Gaussian perturbation."""
    return np.eye(d) * 3.0 + rng.standard_normal((d, d)) / np.sqrt(d)


def textbook_cg(A, b, x0, m):
    """Classical CG iterates and directions (Hestenes-Stiefel), kept independent of the library."""
    x = np.array(x0, dtype=float)
    r = b - A @ x
    p = r.copy()
    xs, ps = [x.copy()], []
    for _ in range(m):
        rr = r @ r
        if np.sqrt(rr) <= 1e-14 * np.linalg.norm(b):
            break
        ap = A @ p
        step = rr / (p @ ap)
        x = x + step * p
        ps.append(step * p)
        r = r - step * ap
        p = r + (r @ r) / rr * p
        xs.append(x.copy())
    return xs, ps


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
