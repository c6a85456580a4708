"""Calibration study: Z-statistics of Bayesian Krylov posteriors against chi-squared laws."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import DimensionError, ProblinError
from .gaussian import GaussianVectorBelief
from .gmres import arnoldi, ata_inverse
from .linalg import eigh, random_test_matrix, solve
from .sbi import SbiProblem, bayescg_directions, sbi_posterior

SOLVERS = ("bayes-gmres-left", "bayescg")
PRIORS = ("identity", "ata-inverse")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
CSV_COLUMNS = ("problem_id", "m", "z", "dof", "err_2norm", "cov_trace")

_EPS = np.finfo(float).eps


# --------------------------------------------------------------------------
# chi-squared law


def _lower_gamma_series(a, x):
    term = total = 1.0 / a
    n = 0
    while abs(term) > abs(total) * _EPS:
        n += 1
        term *= x / (a + n)
        total += term
        if n > 10000:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_fraction(a, x):
    # Modified Lentz evaluation of the continued fraction for Q(a, x).
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_cdf(x: float, dof: float) -> float:
    """``P(X <= x)`` for ``X ~ chi^2_dof``, via the regularized lower incomplete gamma function."""
    if dof <= 0:
        raise ValueError(f"dof must be positive, got {dof}")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a, y = 0.5 * dof, 0.5 * x
    if y < a + 1.0:
        return min(1.0, _lower_gamma_series(a, y))
    return max(0.0, 1.0 - _upper_gamma_fraction(a, y))


def chi2_pdf(x: float, dof: float) -> float:
    if x <= 0.0:
        return 0.0
    k = 0.5 * dof
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chi2_quantile(p: float, dof: float, tol: float = 1e-13) -> float:
    """Inverse of :func:`chi2_cdf`: Wilson-Hilferty start, then bracketed Newton steps."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return math.inf
    h = 2.0 / (9.0 * dof)
    x = dof * max(1.0 - h + NormalDist().inv_cdf(p) * math.sqrt(h), 0.1) ** 3
    lo, hi = 0.0, max(x, dof, 1.0)
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        f = chi2_cdf(x, dof) - p
        if f > 0.0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        pdf = chi2_pdf(x, dof)
        step = f / pdf if pdf > 0.0 else math.inf
        new = x - step
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        if abs(new - x) <= tol * x:
            return new
        x = new
    return x


# --------------------------------------------------------------------------
# statistic


def z_statistic(posterior: GaussianVectorBelief, x_true, rank_tol: float = 1e-10):
    """``(x* - x_m)^T Sigma_m^+ (x* - x_m)`` with an eigen-pseudo-inverse.

    This is the squared covariance-weighted error, so that a calibrated
    posterior of rank ``d - m`` gives a ``chi^2_{d-m}`` value.  Eigenvalues
    at or below ``rank_tol * max(lambda_max, posterior.psd_scale)`` count
    as zero, so a covariance that is round-off relative to its prior has
    rank zero.

    ``x_true`` may also be an ``(n, d)`` array of points, in which case an
    array of ``n`` values is returned.
    """
    x = np.asarray(x_true, dtype=float)
    batch = x.ndim == 2
    e = np.atleast_2d(x) - posterior.mean
    if e.shape[1] != posterior.dim:
        raise DimensionError(f"x_true has length {e.shape[1]}, posterior dimension is {posterior.dim}")
    out = np.zeros(e.shape[0])
    if np.any(e):
        w, v = eigh(posterior.cov)
        keep = w > rank_tol * max(float(w.max()), posterior.psd_scale)
        if np.any(keep):
            c = e @ v[:, keep]
            out = np.maximum(np.einsum("ij,ij->i", c, c / w[keep]), 0.0)
    return out if batch else float(out[0])


# --------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleConfig:
    """Test ensemble and solver for a calibration study.

    Problems are ``A = Q diag(lam) Q^T`` with ``lam ~ Exponential(rate)``,
    ``b ~ N(0, I)`` and ``x* = A^{-1} b``.  ``prior`` is the covariance of
    the zero-mean prior on ``x``: ``identity`` or ``ata-inverse``
    (``(A^T A)^{-1}``, the law of ``x*`` itself).
    """

    d: int = 100
    rate: float = 10.0
    n_problems: int = 500
    iterations: tuple[int, ...] = (0, 1, 3, 5, 8, 10)
    seed: int = 12345
    solver: str = "bayes-gmres-left"
    prior: str = "ata-inverse"

    def __post_init__(self):
        its = tuple(sorted({int(m) for m in self.iterations}))
        object.__setattr__(self, "iterations", its)
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.prior not in PRIORS:
            raise ValueError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if self.n_problems < 1:
            raise ValueError("n_problems must be >= 1")
        if not its or its[0] < 0:
            raise ValueError("iterations must be a non-empty list of non-negative counts")
        if its[-1] > self.d:
            raise ValueError(f"max(iterations) = {its[-1]} exceeds d = {self.d}")
        if not self.rate > 0.0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class CalibrationSample:
    problem_id: int
    m: int
    z: float
    dof: int
    err_2norm: float
    cov_trace: float


@dataclass(frozen=True)
class CalibrationFailure:
    """A solver error; ``m`` is ``None`` when no posterior of the problem could be formed."""

    problem_id: int
    m: int | None
    error: str
    message: str


@dataclass
class CalibrationResult:
    config: EnsembleConfig
    samples: list[CalibrationSample]
    failures: list[CalibrationFailure] = field(default_factory=list)

    def by_m(self, m: int) -> list[CalibrationSample]:
        return [s for s in self.samples if s.m == m]

    def z_values(self, m: int) -> np.ndarray:
        return np.array([s.z for s in self.by_m(m)])

    def summary(self) -> dict:
        return summarize(self)

    def to_csv(self) -> str:
        return samples_to_csv(self.samples)

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def generate_problem(cfg: EnsembleConfig, idx: int):
    """The ``idx``-th test system; depends only on ``(cfg.seed, idx)``, ``d`` and ``rate``."""
    rng = np.random.default_rng([cfg.seed, idx])
    a = np.asarray(random_test_matrix(cfg.d, cfg.rate, rng))
    b = rng.standard_normal(cfg.d)
    return a, b


def _prior(cfg, a):
    sigma = np.eye(cfg.d) if cfg.prior == "identity" else ata_inverse(a)
    return GaussianVectorBelief(np.zeros(cfg.d), sigma)


def _directions(cfg, problem, m_max):
    if m_max == 0:
        return np.zeros((cfg.d, 0))
    if cfg.solver == "bayes-gmres-left":
        fact = arnoldi(problem.A, problem.b - problem.A @ problem.x0, m_max)
        return problem.A @ fact.Qm
    return bayescg_directions(problem, m_max).S


def _run_problem(args):
    cfg, idx = args
    try:
        a, b = generate_problem(cfg, idx)
        x_true = solve(a, b)
        problem = SbiProblem(a, b, _prior(cfg, a))
        s = _directions(cfg, problem, cfg.iterations[-1])
    except ProblinError as exc:
        return [], [CalibrationFailure(idx, None, type(exc).__name__, str(exc))]
    out, failures = [], []
    for m in cfg.iterations:
        # After a breakdown fewer directions exist; the posterior is then exact.
        k = min(m, s.shape[1])
        try:
            post = problem.prior if k == 0 else sbi_posterior(problem, s[:, :k])
        except ProblinError as exc:
            failures.append(CalibrationFailure(idx, m, type(exc).__name__, str(exc)))
            continue
        out.append(
            CalibrationSample(
                idx,
                m,
                z_statistic(post, x_true),
                cfg.d - k,
                float(np.linalg.norm(x_true - post.mean)),
                float(np.trace(post.cov)),
            )
        )
    return out, failures


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else ``PROBLIN_THREADS``, else the machine's cores."""
    if workers is None:
        env = os.environ.get("PROBLIN_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def run_calibration_study(cfg: EnsembleConfig, workers: int | None = None) -> CalibrationResult:
    """Run the solver on every ensemble member and compute Z at each ``m``.

    Problems are independent and seeded from ``(cfg.seed, index)``, so the
    result does not depend on ``workers``.  Solver errors are recorded in
    ``failures`` and the affected ``(problem, m)`` entries are skipped.
    """
    jobs = [(cfg, i) for i in range(cfg.n_problems)]
    n_workers = min(resolve_workers(workers), cfg.n_problems)
    if n_workers == 1:
        results = list(map(_run_problem, jobs))
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_run_problem, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))
    samples, failures = [], []
    for out, fail in results:
        samples.extend(out)
        failures.extend(fail)
    samples.sort(key=lambda s: (s.m, s.problem_id))
    return CalibrationResult(cfg, samples, failures)


def summarize(result: CalibrationResult) -> dict:
    """Per-``m`` empirical statistics of Z next to the ``chi^2_{d-m}`` reference."""
    per_m = {}
    for m in result.config.iterations:
        z = result.z_values(m)
        dof = result.config.d - m
        n = z.size
        entry = {"n": int(n), "dof": dof, "reference_mean": float(dof), "reference_std": math.sqrt(2.0 * dof)}
        entry["reference_quantiles"] = {str(q): chi2_quantile(q, dof) for q in QUANTILES} if dof > 0 else None
        if n:
            std = float(z.std(ddof=1)) if n > 1 else 0.0
            se = std / math.sqrt(n)
            entry.update(
                mean=float(z.mean()),
                std=std,
                standard_error=se,
                shift_in_se=(float(z.mean()) - dof) / se if se > 0.0 else None,
                quantiles={str(q): float(np.quantile(z, q)) for q in QUANTILES},
            )
        per_m[str(m)] = entry
    return {
        "config": {**asdict(result.config), "iterations": list(result.config.iterations)},
        "n_failures": len(result.failures),
        "failures": [asdict(f) for f in result.failures],
        "per_m": per_m,
    }


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in samples:
        writer.writerow([s.problem_id, s.m, repr(s.z), s.dof, repr(s.err_2norm), repr(s.cov_trace)])
    return buf.getvalue()


def convergence_table(result: CalibrationResult) -> list[dict]:
    """Ensemble means of ``||x_m - x*||_2`` and ``trace(Sigma_m)`` per ``m``."""
    rows = []
    for m in result.config.iterations:
        group = result.by_m(m)
        if not group:
            continue
        rows.append(
            {
                "m": m,
                "n": len(group),
                "mean_err_2norm": float(np.mean([s.err_2norm for s in group])),
                "mean_cov_trace": float(np.mean([s.cov_trace for s in group])),
            }
        )
    return rows


def convergence_traces(cfg: EnsembleConfig, workers: int | None = None) -> list[dict]:
    return convergence_table(run_calibration_study(cfg, workers))


def convergence_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("m", "n", "mean_err_2norm", "mean_cov_trace"))
    for r in rows:
        writer.writerow([r["m"], r["n"], repr(r["mean_err_2norm"]), repr(r["mean_cov_trace"])])
    return buf.getvalue()
