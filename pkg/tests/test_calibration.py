import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import problin.calibration as calibration
from conftest import random_spd
from problin.calibration import (
    CSV_COLUMNS,
    EnsembleConfig,
    chi2_cdf,
    chi2_quantile,
    convergence_table,
    convergence_traces,
    generate_problem,
    run_calibration_study,
    z_statistic,
)
from problin.errors import SingularMatrixError
from problin.gaussian import GaussianVectorBelief, condition
from problin.gmres import gmres_solve
from problin.linalg import random_haar_orthogonal


def _pdf(x, k):
    if x <= 0.0:
        return 0.0
    return x ** (k / 2 - 1) * math.exp(-x / 2) / (2 ** (k / 2) * math.gamma(k / 2))


@pytest.mark.parametrize("dof", [1, 10, 90, 99])
def test_chi2_cdf_matches_numerical_integration(dof):
    for x in [0.01, 0.5, dof / 2, dof - 1, dof, dof + 2 * math.sqrt(2 * dof), 3 * dof + 10]:
        val, _ = integrate.quad(_pdf, 0.0, x, args=(dof,), epsabs=1e-13, epsrel=1e-13, limit=200)
        assert chi2_cdf(x, dof) == pytest.approx(val, abs=1e-8)
        assert chi2_cdf(x, dof) == pytest.approx(stats.chi2.cdf(x, dof), abs=1e-12)


@pytest.mark.parametrize("dof", [1, 10, 90, 99])
def test_chi2_quantile_inverts_cdf(dof):
    for p in [1e-6, 0.05, 0.25, 0.5, 0.75, 0.95, 1 - 1e-6]:
        x = chi2_quantile(p, dof)
        assert chi2_cdf(x, dof) == pytest.approx(p, abs=1e-12)
        assert x == pytest.approx(stats.chi2.ppf(p, dof), rel=1e-8)
    assert chi2_quantile(0.0, dof) == 0.0
    assert math.isinf(chi2_quantile(1.0, dof))


def test_chi2_median_dof_90():
    assert chi2_quantile(0.5, 90) == pytest.approx(89.33, abs=0.005)


def test_z_statistic_examples(rng):
    belief = GaussianVectorBelief(rng.standard_normal(4), random_spd(4, rng))
    assert z_statistic(belief, belief.mean) == 0.0
    e1 = np.eye(3)[0]
    assert z_statistic(GaussianVectorBelief(np.zeros(3), np.eye(3)), e1) == pytest.approx(1.0)


def test_z_statistic_sampling_oracle(rng):
    d, m, n = 8, 3, 10_000
    prior = GaussianVectorBelief(np.zeros(d), random_spd(d, rng))
    post = condition(prior, rng.standard_normal((m, d)), rng.standard_normal(m))
    xs = post.sample(rng, n)
    z = z_statistic(post, xs)
    assert z[:5] == pytest.approx([z_statistic(post, x) for x in xs[:5]], rel=1e-12)
    rank = d - m
    assert abs(z.mean() - rank) <= 3 * math.sqrt(2 * rank / n)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_z_statistic_rotation_invariance(seed, m):
    rng = np.random.default_rng(seed)
    d = 6
    prior = GaussianVectorBelief(rng.standard_normal(d), random_spd(d, rng))
    post = prior if m == 0 else condition(prior, rng.standard_normal((m, d)), rng.standard_normal(m))
    x = rng.standard_normal(d)
    q = random_haar_orthogonal(d, rng)
    rotated = GaussianVectorBelief(q @ post.mean, q @ post.cov @ q.T, psd_scale=post.psd_scale)
    z = z_statistic(post, x)
    assert z_statistic(rotated, q @ x) == pytest.approx(z, rel=1e-9, abs=1e-9)


def test_ensemble_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(d=5, iterations=(6,))
    with pytest.raises(ValueError):
        EnsembleConfig(n_problems=0)
    with pytest.raises(ValueError):
        EnsembleConfig(solver="cg")
    with pytest.raises(ValueError):
        EnsembleConfig(prior="inverse")
    assert EnsembleConfig(iterations=[5, 1, 1]).iterations == (1, 5)


def test_matched_prior_is_calibrated_at_m0():
    cfg = EnsembleConfig(d=20, n_problems=300, iterations=(0,), seed=7)
    z = run_calibration_study(cfg, workers=1).z_values(0)
    assert z.size == 300
    assert abs(z.mean() - 20) <= 3 * z.std(ddof=1) / math.sqrt(z.size)


def test_z_equals_gmres_residual_for_matched_prior():
    cfg = EnsembleConfig(d=30, n_problems=5, iterations=(1, 4, 8), seed=3)
    result = run_calibration_study(cfg, workers=1)
    assert not result.failures
    for s in result.samples:
        a, b = generate_problem(cfg, s.problem_id)
        trace, _ = gmres_solve(a, b, None, s.m)
        assert s.z == pytest.approx(trace.residual_norms[-1] ** 2, rel=1e-6)


def test_left_shift_small_ensemble():
    cfg = EnsembleConfig(d=30, n_problems=60, iterations=(5,), seed=11)
    z = run_calibration_study(cfg, workers=1).z_values(5)
    assert z.mean() + 3 * z.std(ddof=1) / math.sqrt(z.size) < 25


@pytest.mark.parametrize("solver", ["bayes-gmres-left", "bayescg"])
@pytest.mark.parametrize("prior", ["identity", "ata-inverse"])
def test_covariance_trace_nonincreasing(solver, prior):
    cfg = EnsembleConfig(d=15, n_problems=8, iterations=(0, 1, 2, 4, 6, 8), seed=5, solver=solver, prior=prior)
    result = run_calibration_study(cfg, workers=1)
    for pid in range(cfg.n_problems):
        traces = [s.cov_trace for s in result.samples if s.problem_id == pid]
        assert all(t1 <= t0 * (1 + 1e-9) for t0, t1 in zip(traces, traces[1:]))
    rows = convergence_table(result)
    assert [r["m"] for r in rows] == list(cfg.iterations)


def test_full_dimension_is_exact():
    cfg = EnsembleConfig(d=10, n_problems=20, iterations=(0, 10), seed=1)
    result = run_calibration_study(cfg, workers=1)
    assert all(f.m == 10 for f in result.failures)
    assert len(result.by_m(10)) + len(result.failures) == 20
    for s in result.by_m(10):
        a, b = generate_problem(cfg, s.problem_id)
        x_true = np.linalg.solve(a, b)
        tol = max(1e-7, 100 * np.finfo(float).eps * np.linalg.cond(a) ** 2)
        assert s.err_2norm <= tol * np.linalg.norm(x_true)
        assert s.dof == 0 and s.z >= 0.0


def test_convergence_traces_decrease_on_average():
    cfg = EnsembleConfig(d=40, n_problems=20, iterations=(0, 2, 5, 10), seed=2)
    rows = convergence_traces(cfg, workers=1)
    errs = [r["mean_err_2norm"] for r in rows]
    traces = [r["mean_cov_trace"] for r in rows]
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
    assert all(t1 < t0 for t0, t1 in zip(traces, traces[1:]))


def test_determinism_and_workers(monkeypatch):
    cfg = EnsembleConfig(d=12, n_problems=6, iterations=(0, 2, 4), seed=99)
    first = run_calibration_study(cfg, workers=1)
    assert first.to_csv() == run_calibration_study(cfg, workers=1).to_csv()
    assert first.to_csv() == run_calibration_study(cfg, workers=2).to_csv()
    monkeypatch.setenv("PROBLIN_THREADS", "1")
    assert first.to_csv() == run_calibration_study(cfg).to_csv()
    assert first.summary_json() == run_calibration_study(cfg, workers=1).summary_json()


def test_outputs_and_failures(monkeypatch):
    real = calibration.generate_problem

    def flaky(cfg, idx):
        if idx == 1:
            raise SingularMatrixError("synthetic failure")
        return real(cfg, idx)

    monkeypatch.setattr(calibration, "generate_problem", flaky)
    cfg = EnsembleConfig(d=10, n_problems=3, iterations=(0, 3), seed=4)
    result = run_calibration_study(cfg, workers=1)
    assert [(f.problem_id, f.m, f.error) for f in result.failures] == [(1, None, "SingularMatrixError")]
    assert sorted({s.problem_id for s in result.samples}) == [0, 2]

    lines = result.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 4
    summary = json.loads(result.summary_json())
    assert summary["n_failures"] == 1
    entry = summary["per_m"]["3"]
    assert entry["dof"] == 7 and entry["n"] == 2
    assert entry["reference_quantiles"]["0.5"] == pytest.approx(stats.chi2.ppf(0.5, 7), rel=1e-8)
    assert set(entry["quantiles"]) == {"0.05", "0.25", "0.5", "0.75", "0.95"}
