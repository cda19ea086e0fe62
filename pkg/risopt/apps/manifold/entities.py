from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from django.conf import settings


@dataclass(frozen=True)
class CirclePoint:
    """A point of the product of M complex circles, |phi_m| = 1."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex, copy=True)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(np.abs(self.phi) - 1.0), initial=0.0))


@dataclass(frozen=True)
class ManifoldParams:
    max_iter: int = 500
    rel_tol: float = 1e-8
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_step: Optional[float] = None
    grad_tol: float = 0.0
    min_step: float = 1e-20

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")

    @classmethod
    def from_settings(cls, **overrides) -> "ManifoldParams":
        defaults = settings.RIS_OPTIM["MANIFOLD"]
        values = dict(
            max_iter=defaults["MAX_ITER"],
            rel_tol=defaults["REL_TOL"],
            shrink=defaults["SHRINK"],
            sufficient_decrease=defaults["SUFFICIENT_DECREASE"],
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class ManifoldTrace:
    values: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.steps)
