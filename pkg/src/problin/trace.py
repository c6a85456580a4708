"""Per-iteration solver records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("iteration", "residual_norm", "cov_trace", "error_2norm")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    iterate: np.ndarray
    residual_norm: float
    cov_trace: float | None = None
    direction: np.ndarray | None = None


@dataclass
class SolverTrace:
    """Iteration history of one solve.

    ``converged_at`` is set when the method stopped before the requested
    number of iterations because the problem was solved exactly (zero
    residual, Lanczos/Arnoldi breakdown).
    """

    solver: str
    records: list[TraceRecord] = field(default_factory=list)
    converged_at: int | None = None
    x_true: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def append(self, iteration, iterate, residual_norm, cov_trace=None, direction=None):
        self.records.append(
            TraceRecord(
                iteration=int(iteration),
                iterate=np.array(iterate, dtype=float),
                residual_norm=float(residual_norm),
                cov_trace=None if cov_trace is None else float(cov_trace),
                direction=None if direction is None else np.array(direction, dtype=float),
            )
        )

    def __len__(self):
        return len(self.records)

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.iterate for r in self.records])

    @property
    def directions(self) -> np.ndarray:
        """Recorded search directions as columns (``d x k``)."""
        cols = [r.direction for r in self.records if r.direction is not None]
        if not cols:
            return np.zeros((self.records[0].iterate.size if self.records else 0, 0))
        return np.column_stack(cols)

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([r.residual_norm for r in self.records])

    def _error(self, rec):
        if self.x_true is None:
            return None
        return float(np.linalg.norm(rec.iterate - self.x_true))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.records:
            err = self._error(rec)
            writer.writerow(
                [
                    rec.iteration,
                    repr(rec.residual_norm),
                    "" if rec.cov_trace is None else repr(rec.cov_trace),
                    "" if err is None else repr(err),
                ]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "converged_at": self.converged_at,
            "records": [
                {
                    "iteration": r.iteration,
                    "residual_norm": _finite(r.residual_norm),
                    "cov_trace": None if r.cov_trace is None else _finite(r.cov_trace),
                    "error_2norm": self._error(r),
                    "iterate": r.iterate.tolist(),
                    "direction": None if r.direction is None else r.direction.tolist(),
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _finite(x: float):
    return x if math.isfinite(x) else None
