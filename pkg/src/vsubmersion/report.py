"""Residual reports shared by the checks and the scenario runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class VerificationReport:
    check: str
    residuals: list[float]
    tolerance: float
    points: np.ndarray | None = None
    expect: str = "pass"
    scenario: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals)) if self.residuals else 0.0

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.residuals)) if self.residuals else 0.0

    @property
    def argmax(self) -> int | None:
        return int(np.argmax(self.residuals)) if self.residuals else None

    @property
    def argmax_point(self) -> list[float] | None:
        if self.points is None or self.argmax is None:
            return None
        return [float(v) for v in np.asarray(self.points)[self.argmax]]

    @property
    def passed(self) -> bool:
        # a NaN residual never passes
        return all(r <= self.tolerance for r in self.residuals)

    @property
    def as_expected(self) -> bool:
        return self.passed == (self.expect == "pass")

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "check": self.check,
            "tolerance": self.tolerance,
            "expect": self.expect,
            "pass": self.passed,
            "as-expected": self.as_expected,
            "max-residual": self.max_residual,
            "mean-residual": self.mean_residual,
            "argmax-index": self.argmax,
            "argmax-point": self.argmax_point,
            "residuals": [float(r) for r in self.residuals],
            "wall-clock": self.wall_clock,
            "metadata": self.metadata,
        }

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.expect == "fail":
            status += " (expected fail)" if not self.passed else " (expected fail, but passed)"
        return (f"{self.check}: {status} max={self.max_residual:.3e} "
                f"mean={self.mean_residual:.3e} tol={self.tolerance:.1e} n={len(self.residuals)}")


