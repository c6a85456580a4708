"""Command-line front end: ``problin {solve,check,calibrate,convergence}``.

Exit codes: 0 on success, 1 on a numerical failure (or a failed ``check``),
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration
from .errors import ProblinError
from .gaussian import GaussianVectorBelief
from .gmres import (
    arnoldi,
    ata_inverse,
    bayes_gmres_arnoldi_prior,
    bayes_gmres_left,
    bayes_gmres_right,
    gmres_solve,
)
from .linalg import MatrixMarketError, read_matrix, read_vector, solve, spd_inv
from .mbi import mbi_cg_solve
from .projection import (
    PreconditionerPair,
    ProjectionSpec,
    projection_sbi_report,
    projection_step,
    sbi_projection_report,
    two_sided_report,
)
from .report import EquivalenceReport
from .sbi import SbiProblem, _bayescg_steps, sbi_posterior
from .trace import SolverTrace

SOLVERS = (
    "sbi",
    "bayescg",
    "mbi-cg",
    "gmres",
    "bayes-gmres-left",
    "bayes-gmres-arnoldi",
    "bayes-gmres-right",
    "projection",
)
PRIORS = ("identity", "inverse", "ata-inverse", "file")
GMRES_FAMILY = ("gmres", "bayes-gmres-left", "bayes-gmres-arnoldi", "bayes-gmres-right")


class ConfigError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


def _warn(message: str) -> None:
    print(f"problin: warning: {message}", file=sys.stderr)


# --------------------------------------------------------------------------
# inputs


def _read(path, flag, reader):
    try:
        return reader(path)
    except FileNotFoundError:
        raise ConfigError(flag, f"no such file {path!r}") from None
    except (OSError, MatrixMarketError, ValueError) as exc:
        raise ConfigError(flag, str(exc)) from None


def _load_system(args):
    if args.matrix is None:
        raise ConfigError("--matrix", "required")
    if args.rhs is None:
        raise ConfigError("--rhs", "required")
    a = _read(args.matrix, "--matrix", read_matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("--matrix", f"matrix must be square, got {a.shape}")
    b = _read(args.rhs, "--rhs", read_vector)
    if b.size != a.shape[0]:
        raise ConfigError("--rhs", f"length {b.size} does not match the {a.shape[0]}x{a.shape[0]} matrix")
    x0 = np.zeros(b.size)
    if args.x0 is not None:
        x0 = _read(args.x0, "--x0", read_vector)
        if x0.size != b.size:
            raise ConfigError("--x0", f"length {x0.size} does not match dimension {b.size}")
    return a, b, x0


def _iterations(args, d):
    if args.iterations is None:
        return d
    try:
        m = int(args.iterations)
    except ValueError:
        raise ConfigError("--iterations", f"expected a count, got {args.iterations!r}") from None
    if not 0 <= m <= d:
        raise ConfigError("--iterations", f"must be in [0, {d}], got {m}")
    return m


def _preconditioners(args, d):
    if args.precondition is None:
        return None
    mats = []
    for flag_path in args.precondition:
        if flag_path.lower() in ("i", "identity"):
            mats.append(None)
            continue
        p = _read(flag_path, "--precondition", read_matrix)
        if p.shape != (d, d):
            raise ConfigError("--precondition", f"{flag_path}: expected {d}x{d}, got {p.shape}")
        mats.append(p)
    try:
        return PreconditionerPair(*mats)
    except ProblinError as exc:
        raise ConfigError("--precondition", str(exc)) from None


def _prior(args, a, x0):
    name = args.prior or "identity"
    d = a.shape[0]
    if name == "identity":
        cov = np.eye(d)
    elif name == "inverse":
        _warn("--prior inverse forms a dense A^{-1}; use for validation only")
        cov = spd_inv(a)
    elif name == "ata-inverse":
        _warn("--prior ata-inverse forms a dense (A^T A)^{-1}; use for validation only")
        cov = ata_inverse(a)
    else:
        if args.prior_file is None:
            raise ConfigError("--prior-file", "required with --prior file")
        cov = _read(args.prior_file, "--prior-file", read_matrix)
        if cov.shape != (d, d):
            raise ConfigError("--prior-file", f"expected {d}x{d}, got {cov.shape}")
    return GaussianVectorBelief(x0, cov)


def _mbi_prior(args):
    try:
        alpha, beta, gamma = (float(t) for t in args.mbi_prior.split(","))
    except ValueError:
        raise ConfigError("--mbi-prior", f"expected ALPHA,BETA,GAMMA, got {args.mbi_prior!r}") from None
    return alpha, beta, gamma


# --------------------------------------------------------------------------
# solvers; each returns ([(x, cov or None, direction or None), ...], converged_at)


def _run_sbi(args, a, b, x0, m):
    problem = SbiProblem(a, b, _prior(args, a, x0))
    s = np.random.default_rng(args.seed).standard_normal((b.size, m))
    steps = [(problem.x0, problem.sigma0, None)]
    for j in range(1, m + 1):
        post = sbi_posterior(problem, s[:, :j])
        steps.append((post.mean, post.cov, s[:, j - 1]))
    return steps, None


def _run_bayescg(args, a, b, x0, m):
    problem = SbiProblem(a, b, _prior(args, a, x0))
    steps = [(problem.x0, problem.sigma0, None)]
    steps += [(x, cov, s) for _, x, cov, s in _bayescg_steps(problem, m)]
    return steps, (len(steps) - 1 if len(steps) - 1 < m else None)


def _run_mbi_cg(args, a, b, x0, m):
    alpha, beta, gamma = _mbi_prior(args)
    if gamma > 0.0:
        _warn("--mbi-prior with gamma > 0 forms a dense A^{-1}; use for validation only")
    if np.any(x0):
        _warn("mbi-cg starts from x0 = H0 b; --x0 is ignored")
    trace = mbi_cg_solve(a, b, alpha, beta, gamma, m, validation=gamma > 0.0)
    return [(r.iterate, None, r.direction) for r in trace.records], trace.converged_at


def _run_gmres(args, a, b, x0, m):
    trace, _ = gmres_solve(a, b, x0, m)
    return [(r.iterate, None, r.direction) for r in trace.records], trace.converged_at


def _per_step(a, b, x0, m, fn):
    if np.linalg.norm(b - a @ x0) == 0.0:
        return [(x0, None, None)], 0
    fact = arnoldi(a, b - a @ x0, m)
    return [fn(j) for j in range(fact.m + 1)], fact.breakdown


def _run_bayes_gmres_left(args, a, b, x0, m):
    sigma0 = ata_inverse(a)

    def step(j):
        post = bayes_gmres_left(a, b, x0, j, sigma0=sigma0)
        return post.mean, post.cov, None

    return _per_step(a, b, x0, m, step)


def _run_bayes_gmres_arnoldi(args, a, b, x0, m):
    def step(j):
        post = bayes_gmres_arnoldi_prior(a, b, x0, j)
        return post.mean, post.cov, None

    return _per_step(a, b, x0, m, step)


def _run_bayes_gmres_right(args, a, b, x0, m):
    return _per_step(a, b, x0, m, lambda j: (bayes_gmres_right(a, b, j, x0), None, None))


def _galerkin_spec(a, b, x0, j):
    q = arnoldi(a, b - a @ x0, j).Qm if j else np.zeros((b.size, 0))
    return ProjectionSpec(q, q, x0)


def _run_projection(args, a, b, x0, m):
    return _per_step(a, b, x0, m, lambda j: (projection_step(a, b, _galerkin_spec(a, b, x0, j)), None, None))


RUNNERS = {
    "sbi": _run_sbi,
    "bayescg": _run_bayescg,
    "mbi-cg": _run_mbi_cg,
    "gmres": _run_gmres,
    "bayes-gmres-left": _run_bayes_gmres_left,
    "bayes-gmres-arnoldi": _run_bayes_gmres_arnoldi,
    "bayes-gmres-right": _run_bayes_gmres_right,
    "projection": _run_projection,
}


def run_solver(args, a, b, x0, m, pair=None) -> SolverTrace:
    """Run ``args.solver`` on ``(Pl A Pr, Pl b)`` and report iterates in ``x = Pr z`` coordinates."""
    if args.prior is not None and args.solver in GMRES_FAMILY + ("mbi-cg", "projection"):
        _warn(f"--prior has no effect on {args.solver}")
    d = b.size
    pl = np.eye(d) if pair is None else pair.left(d)
    pr = np.eye(d) if pair is None else pair.right(d)
    a_sys, b_sys = pl @ a @ pr, pl @ b
    z0 = x0 if pair is None else solve(pr, x0)
    steps, converged = RUNNERS[args.solver](args, a_sys, b_sys, z0, m)
    name = args.solver if pair is None else f"{args.solver}+precondition"
    trace = SolverTrace(name, converged_at=converged, x_true=solve(a, b))
    for j, (z, cov, s) in enumerate(steps):
        x = pr @ z
        cov_trace = None if cov is None else float(np.trace(pr @ cov @ pr.T))
        trace.append(j, x, np.linalg.norm(b - a @ x), cov_trace, s)
    return trace


# --------------------------------------------------------------------------
# checks


def reference_cg(A, b, x0, m):
    """Textbook conjugate gradients; returns the iterates ``x_0..x_k``."""
    x = np.array(x0, dtype=float)
    r = b - A @ x
    p = r.copy()
    xs = [x.copy()]
    rr = r @ r
    for _ in range(m):
        if rr == 0.0:
            break
        ap = A @ p
        step = rr / (p @ ap)
        x = x + step * p
        r = r - step * ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        xs.append(x.copy())
    return xs


def _iterate_report(name, trace, reference, rel_tol):
    report = EquivalenceReport(name)
    worst = 0.0
    for rec, x in zip(trace.records, reference):
        worst = max(worst, np.linalg.norm(rec.iterate - x) / max(np.linalg.norm(x), 1.0))
    report.add("max relative iterate gap", worst, rel_tol)
    if len(reference) != len(trace.records):
        report.notes.append(f"{len(trace.records)} iterates vs {len(reference)} reference iterates")
    return report


def run_checks(args, a, b, x0, m, pair=None) -> list[EquivalenceReport]:
    reports = []
    solver = args.solver
    if solver in ("bayes-gmres-left", "bayes-gmres-arnoldi", "bayes-gmres-right"):
        trace = run_solver(args, a, b, x0, m)
        ref = gmres_solve(a, b, x0, m)[0]
        reports.append(_iterate_report(f"{solver} vs gmres", trace, [r.iterate for r in ref.records], 1e-7))
    elif solver == "gmres":
        trace, _ = gmres_solve(a, b, x0, m)
        report = EquivalenceReport("gmres vs normal equations")
        r0 = b - a @ x0
        worst = 0.0
        fact = trace.extras.get("arnoldi")
        for j, rec in enumerate(trace.records[1:], start=1):
            aq = a @ fact.Q[:, :j]
            oracle = x0 + fact.Q[:, :j] @ np.linalg.solve(aq.T @ aq, aq.T @ r0)
            worst = max(worst, np.linalg.norm(rec.iterate - oracle) / max(np.linalg.norm(oracle), 1.0))
        report.add("max relative iterate gap", worst, 1e-8)
        ls = np.array(trace.extras["ls_residuals"])
        report.add("residual vs least-squares residual", np.abs(trace.residual_norms - ls).max(), 1e-9 * np.linalg.norm(b))
        reports.append(report)
    elif solver in ("bayescg", "mbi-cg"):
        if solver == "bayescg" and args.prior != "inverse":
            _warn("check bayescg compares against CG and therefore uses --prior inverse")
            args = argparse.Namespace(**{**vars(args), "prior": "inverse"})
        trace = run_solver(args, a, b, x0, m)
        start = x0 if solver == "bayescg" else trace.records[0].iterate
        reports.append(_iterate_report(f"{solver} vs cg", trace, reference_cg(a, b, start, m), 1e-6 if solver == "bayescg" else 1e-8))
    elif solver == "sbi":
        problem = SbiProblem(a, b, _prior(args, a, x0))
        s = np.random.default_rng(args.seed).standard_normal((b.size, m))
        reports.append(sbi_projection_report(problem, s))
    elif solver == "projection":
        reports.append(projection_sbi_report(_galerkin_spec(a, b, x0, m), a, b))
    if pair is not None:
        problem = SbiProblem(a, b, _prior(args, a, x0))
        s = np.random.default_rng(args.seed).standard_normal((b.size, m))
        reports.append(two_sided_report(problem, pair, s))
    return reports


# --------------------------------------------------------------------------
# ensembles


def _ensemble(args) -> calibration.EnsembleConfig:
    try:
        its = [int(t) for t in args.iterations.split(",") if t.strip()]
    except ValueError:
        raise ConfigError("--iterations", f"expected a comma-separated list of counts, got {args.iterations!r}") from None
    if args.solver not in calibration.SOLVERS:
        raise ConfigError("--solver", f"calibration supports {', '.join(calibration.SOLVERS)}")
    prior = args.prior or "ata-inverse"
    if prior not in calibration.PRIORS:
        raise ConfigError("--prior", f"calibration supports {', '.join(calibration.PRIORS)}")
    try:
        return calibration.EnsembleConfig(
            d=args.d,
            rate=args.rate,
            n_problems=args.problems,
            iterations=tuple([0] + its),
            seed=args.seed,
            solver=args.solver,
            prior=prior,
        )
    except ValueError as exc:
        raise ConfigError("--iterations" if "iterations" in str(exc) else "--d", str(exc)) from None


def _write(args, text):
    if args.output is None:
        sys.stdout.write(text)
        return
    try:
        Path(args.output).write_text(text)
    except OSError as exc:
        raise ConfigError("--output", str(exc)) from None


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    a, b, x0 = _load_system(args)
    m = _iterations(args, b.size)
    pair = _preconditioners(args, b.size)
    trace = run_solver(args, a, b, x0, m, pair)
    _write(args, trace.to_csv() if args.format == "csv" else trace.to_json() + "\n")
    return 0


def cmd_check(args) -> int:
    a, b, x0 = _load_system(args)
    m = _iterations(args, b.size)
    pair = _preconditioners(args, b.size)
    reports = run_checks(args, a, b, x0, m, pair)
    if args.format == "json":
        _write(args, json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    else:
        _write(args, "".join(line + "\n" for r in reports for line in r.lines()))
    return 0 if all(r.passed for r in reports) else 1


def cmd_calibrate(args) -> int:
    cfg = _ensemble(args)
    result = calibration.run_calibration_study(cfg, workers=args.workers)
    summary = result.summary_json() + "\n"
    if args.format == "json":
        _write(args, summary)
    else:
        _write(args, result.to_csv())
        summary_path = args.summary or (Path(args.output).with_suffix(".summary.json") if args.output else None)
        if summary_path is not None:
            try:
                Path(summary_path).write_text(summary)
            except OSError as exc:
                raise ConfigError("--summary", str(exc)) from None
    for m, entry in result.summary()["per_m"].items():
        if entry["n"]:
            print(
                f"m={m}: mean Z {entry['mean']:.4g} (reference {entry['reference_mean']:.4g}, "
                f"{entry['shift_in_se'] if entry['shift_in_se'] is not None else float('nan'):+.1f} SE), n={entry['n']}",
                file=sys.stderr,
            )
    if result.failures:
        print(f"{len(result.failures)} solver failures recorded in the summary", file=sys.stderr)
    return 0


def cmd_convergence(args) -> int:
    rows = calibration.convergence_traces(_ensemble(args), workers=args.workers)
    if args.format == "json":
        _write(args, json.dumps(rows, indent=2, sort_keys=True) + "\n")
    else:
        _write(args, calibration.convergence_to_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="problin", description="Probabilistic linear solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=12345)
    common.add_argument("--prior", choices=PRIORS, help="prior covariance preset")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--solver", choices=SOLVERS, required=True)
    system.add_argument("--matrix", help="Matrix Market file with A")
    system.add_argument("--rhs", help="Matrix Market file with b")
    system.add_argument("--x0", help="Matrix Market file with the prior mean / starting point")
    system.add_argument("--iterations", help="number of iterations (default: dimension)")
    system.add_argument("--prior-file", help="Matrix Market covariance for --prior file")
    system.add_argument("--precondition", nargs=2, metavar=("PL", "PR"), help="Matrix Market files, or I for identity")
    system.add_argument("--mbi-prior", default="1,1,0", help="ALPHA,BETA,GAMMA for mbi-cg (default 1,1,0)")

    ensemble = argparse.ArgumentParser(add_help=False)
    ensemble.add_argument("--solver", default="bayes-gmres-left", help="bayes-gmres-left or bayescg")
    ensemble.add_argument("--d", type=int, default=100)
    ensemble.add_argument("--rate", type=float, default=10.0)
    ensemble.add_argument("--problems", type=int, default=500)
    ensemble.add_argument("--iterations", default="1,3,5,8,10", help="comma-separated m values; m=0 is always added")
    ensemble.add_argument("--workers", type=int, help="worker processes (default: PROBLIN_THREADS or cores)")

    p = sub.add_parser("solve", parents=[common, system], help="run a solver and emit its trace")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("check", parents=[common, system], help="compare a solver with its classical counterpart")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("calibrate", parents=[common, ensemble], help="run the Z-statistic calibration study")
    p.add_argument("--summary", help="summary JSON path (default: next to --output)")
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("convergence", parents=[common, ensemble], help="ensemble-mean error and covariance trace per m")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"problin: error: {exc}", file=sys.stderr)
        return 2
    except ProblinError as exc:
        print(f"problin: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
