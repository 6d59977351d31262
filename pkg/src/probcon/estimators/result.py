from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass(frozen=True)
class EstimationResult:
    """Fitted parameters plus the diagnostics of the run that produced them."""

    theta: np.ndarray
    hyper: Optional[Any] = None
    objective_trace: tuple = ()
    feasibility: tuple = ()
    iterations: int = 0
    converged: bool = True
    info: dict = field(default_factory=dict)

    @property
    def objective(self):
        return self.objective_trace[-1] if self.objective_trace else None

    def to_dict(self) -> dict:
        hyper = None
        if self.hyper is not None:
            if hasattr(self.hyper, "alpha"):
                hyper = {"alpha": self.hyper.alpha.tolist()}
            else:
                hyper = {"mu": self.hyper.mu.tolist(), "sigma": np.asarray(self.hyper.sigma).tolist()}
        return {
            "theta": np.asarray(self.theta).tolist(),
            "hyper": hyper,
            "objective": self.objective,
            "objective_trace": list(self.objective_trace),
            "feasibility": list(self.feasibility),
            "iterations": self.iterations,
            "converged": self.converged,
        }
