import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from problin.errors import DimensionError, NotSPDError, NotSymmetricError
from problin.gaussian import GaussianVectorBelief, condition, pushforward


def _belief(rng, d):
    return GaussianVectorBelief(rng.standard_normal(d), random_spd(d, rng))


def test_belief_validation():
    with pytest.raises(NotSymmetricError):
        GaussianVectorBelief(np.zeros(2), [[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(NotSPDError):
        GaussianVectorBelief(np.zeros(2), [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DimensionError):
        GaussianVectorBelief(np.zeros(3), np.eye(2))
    b = GaussianVectorBelief(np.zeros(2), np.zeros((2, 2)))
    assert b.dim == 2


def test_pushforward_examples(rng):
    b = _belief(rng, 4)
    same = pushforward(b, np.eye(4), np.zeros(4))
    np.testing.assert_array_equal(same.mean, b.mean)
    np.testing.assert_array_equal(same.cov, b.cov)
    c = rng.standard_normal(3)
    point = pushforward(b, np.zeros((3, 4)), c)
    np.testing.assert_array_equal(point.mean, c)
    np.testing.assert_array_equal(point.cov, np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        pushforward(b, np.eye(3))


def test_pushforward_monte_carlo(rng):
    d, k, n = 4, 3, 100_000
    b = _belief(rng, d)
    m = rng.standard_normal((k, d))
    z = rng.standard_normal(k)
    out = pushforward(b, m, z)
    samples = b.sample(rng, n) @ m.T + z
    se_mean = np.sqrt(np.diag(out.cov) / n)
    assert np.all(np.abs(samples.mean(axis=0) - out.mean) <= 3 * se_mean)
    emp = np.cov(samples, rowvar=False)
    # Var of the sample covariance entry (i, j) is (S_ii S_jj + S_ij^2) / n for Gaussians.
    var = (np.outer(np.diag(out.cov), np.diag(out.cov)) + out.cov**2) / n
    assert np.all(np.abs(emp - out.cov) <= 3 * np.sqrt(var))


def test_condition_examples(rng):
    b = _belief(rng, 4)
    y = rng.standard_normal(4)
    full = condition(b, np.eye(4), y)
    np.testing.assert_allclose(full.mean, y, atol=1e-10)
    np.testing.assert_allclose(full.cov, 0.0, atol=1e-10)

    m = rng.standard_normal((2, 4))
    y2 = rng.standard_normal(2)
    dup = condition(b, np.vstack([m, m[:1]]), np.append(y2, y2[0]))
    ref = condition(b, m, y2)
    np.testing.assert_allclose(dup.mean, ref.mean, atol=1e-9)
    np.testing.assert_allclose(dup.cov, ref.cov, atol=1e-9)

    b5 = _belief(rng, 5)
    m = rng.standard_normal((2, 5))
    post = condition(b5, m, y2)
    np.testing.assert_allclose(m @ post.mean, y2, atol=1e-9)
    np.testing.assert_allclose(m @ post.cov @ m.T, 0.0, atol=1e-9)
    with pytest.raises(DimensionError):
        condition(b5, m, np.ones(3))


def test_condition_with_noise_matches_textbook(rng):
    b = _belief(rng, 4)
    m = rng.standard_normal((2, 4))
    lam = random_spd(2, rng)
    y = rng.standard_normal(2)
    z = rng.standard_normal(2)
    post = condition(b, m, y, z=z, noise=lam)
    gain = b.cov @ m.T @ np.linalg.inv(m @ b.cov @ m.T + lam)
    np.testing.assert_allclose(post.mean, b.mean + gain @ (y - m @ b.mean - z), atol=1e-12)
    np.testing.assert_allclose(post.cov, b.cov - gain @ m @ b.cov, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sequential_equals_batch_conditioning(seed):
    rng = np.random.default_rng(seed)
    b = _belief(rng, 6)
    m1, m2 = rng.standard_normal((2, 6)), rng.standard_normal((2, 6))
    y1, y2 = rng.standard_normal(2), rng.standard_normal(2)
    seq = condition(condition(b, m1, y1), m2, y2)
    batch = condition(b, np.vstack([m1, m2]), np.concatenate([y1, y2]))
    np.testing.assert_allclose(seq.mean, batch.mean, atol=1e-8)
    np.testing.assert_allclose(seq.cov, batch.cov, atol=1e-8)
    assert np.trace(batch.cov) <= np.trace(b.cov) + 1e-12


def test_condition_matches_rank_one_updates(rng):
    b = _belief(rng, 5)
    # Rows orthonormal in the Sigma-inner product turn the update into a sum of rank-1 terms.
    m = rng.standard_normal((3, 5))
    low = np.linalg.cholesky(m @ b.cov @ m.T)
    m = np.linalg.solve(low, m)
    y = rng.standard_normal(3)
    mean, cov = b.mean.copy(), b.cov.copy()
    for row, yi in zip(m, y):
        v = cov @ row
        mean = mean + v * (yi - row @ mean) / (row @ v)
        cov = cov - np.outer(v, v) / (row @ v)
    post = condition(b, m, y)
    np.testing.assert_allclose(post.mean, mean, atol=1e-9)
    np.testing.assert_allclose(post.cov, cov, atol=1e-9)
