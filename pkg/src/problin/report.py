"""Result object for the executable equivalence checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class EquivalenceReport:
    """Gaps between two routes that should agree, each with its tolerance.

    ``violations`` lists hypotheses of the underlying statement that the
    inputs fail; a report with violations never passes, but its gaps are
    still computed so the effect of the violation is visible.
    """

    name: str
    gaps: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, key: str, gap: float, tol: float) -> None:
        self.gaps[key] = float(gap)
        self.tolerances[key] = float(tol)

    @property
    def failures(self) -> list[str]:
        return [k for k, g in self.gaps.items() if not (math.isfinite(g) and g <= self.tolerances[k])]

    @property
    def passed(self) -> bool:
        return not self.violations and not self.failures

    def lines(self) -> list[str]:
        out = []
        for k, g in self.gaps.items():
            status = "PASS" if k not in self.failures else "FAIL"
            out.append(f"{status} {self.name}: {k} = {g:.3e} (tol {self.tolerances[k]:.0e})")
        out.extend(f"VIOLATION {self.name}: {v}" for v in self.violations)
        out.extend(f"NOTE {self.name}: {n}" for n in self.notes)
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "gaps": self.gaps,
            "tolerances": self.tolerances,
            "violations": self.violations,
            "notes": self.notes,
        }
