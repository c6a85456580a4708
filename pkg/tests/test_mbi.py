import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_nonsymmetric, random_spd, textbook_cg
from problin.errors import BreakdownError, PreconditionViolation, RankDeficiencyError
from problin.gaussian import GaussianVectorBelief, condition, pushforward
from problin.linalg import kron, symkron, vec
from problin.mbi import (
    MatrixNormalBelief,
    SymmetricMatrixBelief,
    mbi_cg_solve,
    mbi_posterior_left,
    mbi_posterior_right,
    normalized_right_cov,
    sbi_equivalence_check,
    solution_marginal,
    symkron_posterior,
)
from problin.sbi import SbiProblem, SearchDirections

seeds = st.integers(0, 2**32 - 1)


def _belief(rng, d):
    return MatrixNormalBelief(rng.standard_normal((d, d)), random_spd(d, rng), random_spd(d, rng))


def _dense(belief):
    return GaussianVectorBelief(vec(belief.mean), kron(belief.left_cov, belief.right_cov))


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 5), st.integers(1, 3))
def test_right_posterior_matches_dense_oracle(seed, d, m):
    rng = np.random.default_rng(seed)
    m = min(m, d)
    a = random_nonsymmetric(d, rng)
    prior = _belief(rng, d)
    s = rng.standard_normal((d, m))
    y = a @ s
    post = mbi_posterior_right(prior, s, y)
    oracle = condition(_dense(prior), kron(np.eye(d), y.T), vec(s))
    np.testing.assert_allclose(vec(post.mean), oracle.mean, atol=1e-9)
    np.testing.assert_allclose(kron(post.left_cov, post.right_cov), oracle.cov, atol=1e-9)
    np.testing.assert_array_equal(post.left_cov, prior.left_cov)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 5), st.integers(1, 3))
def test_left_posterior_matches_dense_oracle(seed, d, m):
    rng = np.random.default_rng(seed)
    m = min(m, d)
    a = random_nonsymmetric(d, rng)
    prior = _belief(rng, d)
    s = rng.standard_normal((d, m))
    y = a.T @ s
    post = mbi_posterior_left(prior, s, y)
    oracle = condition(_dense(prior), kron(y.T, np.eye(d)), vec(s.T))
    np.testing.assert_allclose(vec(post.mean), oracle.mean, atol=1e-9)
    np.testing.assert_allclose(kron(post.left_cov, post.right_cov), oracle.cov, atol=1e-9)
    np.testing.assert_array_equal(post.right_cov, prior.right_cov)


def test_right_posterior_examples(rng):
    d = 5
    a = random_nonsymmetric(d, rng)
    prior = _belief(rng, d)
    s = rng.standard_normal((d, d))
    post = mbi_posterior_right(prior, s, a @ s)
    np.testing.assert_allclose(post.mean @ (a @ s), s, atol=1e-8)
    exact = MatrixNormalBelief(np.linalg.inv(a), prior.left_cov, prior.right_cov)
    s2 = s[:, :2]
    np.testing.assert_allclose(mbi_posterior_right(exact, s2, a @ s2).mean, exact.mean, atol=1e-12)
    with pytest.raises(RankDeficiencyError):
        mbi_posterior_right(prior, np.column_stack([s2[:, 0], s2[:, 0]]), a @ np.column_stack([s2[:, 0], s2[:, 0]]))


def test_left_posterior_examples(rng):
    d = 5
    a = random_nonsymmetric(d, rng)
    b = rng.standard_normal(d)
    prior = _belief(rng, d)
    s = rng.standard_normal((d, d))
    post = mbi_posterior_left(prior, s, a.T @ s)
    assert np.linalg.norm(b - a @ post.mean @ b) <= 1e-7 * np.linalg.norm(b)
    exact = MatrixNormalBelief(np.linalg.inv(a), prior.left_cov, prior.right_cov)
    np.testing.assert_allclose(mbi_posterior_left(exact, s[:, :2], a.T @ s[:, :2]).mean, exact.mean, atol=1e-12)
    one = MatrixNormalBelief(prior.mean, prior.left_cov, np.eye(d))
    s1 = s[:, :1]
    post = mbi_posterior_left(one, s1, a.T @ s1)
    oracle = condition(_dense(one), kron((a.T @ s1).T, np.eye(d)), vec(s1.T))
    np.testing.assert_allclose(vec(post.mean), oracle.mean, atol=1e-9)


def test_solution_marginal(rng):
    d = 4
    belief = _belief(rng, d)
    zero = solution_marginal(belief, np.zeros(d))
    np.testing.assert_array_equal(zero.mean, 0.0)
    np.testing.assert_array_equal(zero.cov, 0.0)
    b = rng.standard_normal(d)
    normed = MatrixNormalBelief(belief.mean, belief.left_cov, normalized_right_cov(belief.right_cov, b))
    np.testing.assert_allclose(solution_marginal(normed, b).cov, belief.left_cov, atol=1e-12)
    oracle = pushforward(_dense(belief), kron(np.eye(d), b[None, :]))
    out = solution_marginal(belief, b)
    np.testing.assert_allclose(out.mean, oracle.mean, atol=1e-10)
    np.testing.assert_allclose(out.cov, oracle.cov, atol=1e-10)


def _equivalent_pair(rng, d):
    a = random_nonsymmetric(d, rng)
    b = rng.standard_normal(d)
    sigma0 = random_spd(d, rng)
    h0 = rng.standard_normal((d, d))
    w0 = normalized_right_cov(random_spd(d, rng), b)
    mbi = MatrixNormalBelief(h0, sigma0, w0)
    problem = SbiProblem(a, b, GaussianVectorBelief(h0 @ b, sigma0))
    return mbi, problem


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(0, 8))
def test_sbi_equivalence_holds_under_preconditions(seed, m):
    rng = np.random.default_rng(seed)
    mbi, problem = _equivalent_pair(rng, 8)
    report = sbi_equivalence_check(mbi, problem, SearchDirections(rng.standard_normal((8, m))))
    assert report.passed, report.lines()


def test_sbi_equivalence_examples(rng):
    mbi, problem = _equivalent_pair(rng, 8)
    report = sbi_equivalence_check(mbi, problem, SearchDirections.empty(8))
    assert report.gaps == {"mean": 0.0, "cov": 0.0}
    s = rng.standard_normal((8, 3))
    assert sbi_equivalence_check(mbi, problem, s).passed
    doubled = MatrixNormalBelief(mbi.mean, mbi.left_cov, 2.0 * mbi.right_cov)
    report = sbi_equivalence_check(doubled, problem, s)
    assert not report.passed
    assert any("b^T W0 b" in v for v in report.violations)
    ratio = float(report.notes[0].rsplit(" ", 1)[1])
    assert ratio == pytest.approx(2.0, rel=1e-10)
    shifted = MatrixNormalBelief(mbi.mean + 1.0, mbi.left_cov, mbi.right_cov)
    report = sbi_equivalence_check(shifted, problem, s)
    assert any("H0 b" in v for v in report.violations)


def _sym_instance(rng, d, m):
    a = random_spd(d, rng)
    w = random_spd(d, rng)
    h0 = random_spd(d, rng)
    y = rng.standard_normal((d, m))
    return a, SymmetricMatrixBelief(h0, w), np.linalg.solve(a, y), y


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(1, 3))
def test_symkron_posterior_matches_dense_oracle(seed, d, m):
    rng = np.random.default_rng(seed)
    m = min(m, d)
    _, belief, s, y = _sym_instance(rng, d, m)
    post = symkron_posterior(belief, s, y)
    prior = GaussianVectorBelief(vec(belief.mean), symkron(belief.w, belief.w))
    oracle = condition(prior, kron(np.eye(d), y.T), vec(s))
    np.testing.assert_allclose(vec(post.mean), oracle.mean, atol=1e-9)
    np.testing.assert_allclose(symkron(post.w, post.w), oracle.cov, atol=1e-9)


def test_symkron_posterior_examples(rng):
    a, belief, s, y = _sym_instance(rng, 4, 4)
    np.testing.assert_allclose(symkron_posterior(belief, s, y).mean, np.linalg.inv(a), atol=1e-7)
    assert symkron_posterior(belief, np.zeros((4, 0)), np.zeros((4, 0))) is belief
    _, belief, s, y = _sym_instance(rng, 4, 2)
    post = symkron_posterior(belief, s, y)
    np.testing.assert_allclose(post.mean, post.mean.T, atol=1e-10)
    np.testing.assert_allclose(post.mean @ y, s, atol=1e-8)
    wy = belief.w @ y
    np.testing.assert_allclose(post.w, belief.w - wy @ np.linalg.solve(y.T @ wy, wy.T), atol=1e-12)


PRIORS = [(1.0, 1.0, 0.0), (2.0, 0.0, 1.0), (0.5, 1.0, 1.0)]


@pytest.mark.parametrize("alpha,beta,gamma", PRIORS)
def test_mbi_cg_reproduces_cg(rng, alpha, beta, gamma):
    d = 10
    a = random_spd(d, rng)
    b = rng.standard_normal(d)
    trace = mbi_cg_solve(a, b, alpha, beta, gamma, validation=True)
    xs, ss = textbook_cg(a, b, alpha * b, d)
    assert len(trace.records) == len(xs)
    for rec, x in zip(trace.records, xs):
        assert np.linalg.norm(rec.iterate - x) <= 1e-8 * np.linalg.norm(x)
    for s_alg, s_cg in zip(trace.directions.T, ss):
        assert np.linalg.norm(s_alg - s_cg) <= 1e-8 * np.linalg.norm(s_cg)
    np.testing.assert_allclose(trace.extras["d"][0], alpha * (b - a @ (alpha * b)), rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from(PRIORS))
def test_mbi_cg_directions_are_conjugate(seed, prior):
    # The last directions are built from residuals near round-off level relative
    # to r_0, so conjugacy is checked on the first d - 2 of them.
    rng = np.random.default_rng(seed)
    a = random_spd(8, rng)
    trace = mbi_cg_solve(a, rng.standard_normal(8), *prior, m=6, validation=True)
    d = np.column_stack(trace.extras["d"])
    g = d.T @ a @ d
    norms = np.sqrt(np.diag(g))
    off = np.abs(g - np.diag(np.diag(g))) / np.outer(norms, norms)
    assert off.max() <= 1e-8


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from(PRIORS))
def test_mbi_cg_directions_span_krylov_space(seed, prior):
    rng = np.random.default_rng(seed)
    a = random_spd(8, rng)
    trace = mbi_cg_solve(a, rng.standard_normal(8), *prior, validation=True)
    s = trace.directions
    for i in range(1, s.shape[1]):
        r = trace.extras["r"][i]
        v = trace.extras["H"][i] @ r
        basis = np.column_stack([s[:, :i], r])
        coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
        assert np.linalg.norm(basis @ coef - v) <= 1e-8 * np.linalg.norm(v)


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from(PRIORS))
def test_mbi_cg_estimate_differs_from_posterior_mean_by_next_direction(seed, prior):
    # H_m Y = S gives x_m = x_0 + H_m (b - A x_0) + H_m r_m, and H_m r_m = -d_{m+1}.
    rng = np.random.default_rng(seed)
    a = random_spd(8, rng)
    b = rng.standard_normal(8)
    trace = mbi_cg_solve(a, b, *prior, validation=True)
    x0 = trace.records[0].iterate
    for rec in trace.records[1:]:
        h = trace.extras["H"][rec.iteration]
        d_next = -h @ trace.extras["r"][rec.iteration]
        rhs = x0 + h @ (b - a @ x0) - d_next
        assert np.linalg.norm(rec.iterate - rhs) <= 1e-7 * np.linalg.norm(rec.iterate)


def test_mbi_cg_errors(rng):
    a = random_spd(4, rng)
    b = rng.standard_normal(4)
    with pytest.raises(PreconditionViolation):
        mbi_cg_solve(a, b, 1.0, 1.0, 1.0)
    with pytest.raises(PreconditionViolation):
        mbi_cg_solve(a, b, 0.0, 1.0, 0.0)
    with pytest.raises(PreconditionViolation):
        mbi_cg_solve(a, b, 1.0, 0.0, 0.0)
    with pytest.raises(BreakdownError):
        mbi_cg_solve(np.diag([1.0, -1.0]), np.ones(2), 1.0, 1.0, 0.0)


def test_mbi_cg_stops_at_zero_residual():
    a = np.diag([1.0, 2.0, 2.0])
    # x0 = b already solves the first coordinate; one step finishes the rest.
    trace = mbi_cg_solve(a, np.ones(3), 1.0, 1.0, 0.0)
    assert trace.converged_at == 1
    np.testing.assert_allclose(trace.records[-1].iterate, [1.0, 0.5, 0.5], atol=1e-14)
