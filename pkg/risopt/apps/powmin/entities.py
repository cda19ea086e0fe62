from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from manifold.entities import ManifoldParams


@dataclass(frozen=True)
class PowMinParams:
    alpha: float = 0.5
    epsilon: float = 1e-3
    max_iter: int = 100
    rel_tol: float = 1e-4
    dinkelbach_tol: float = 1e-6
    dinkelbach_max_iter: int = 20
    manifold: ManifoldParams = field(default_factory=ManifoldParams)
    varsigma_grid: int = 101
    varsigma_xatol: float = 1e-6
    varsigma_max_sweeps: int = 10
    scale_up_cap: int = 30
    qcqp_tol: float = 1e-8
    qcqp_max_iter: int = 500
    pair_max_sweeps: int = 10
    pair_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.max_iter < 1 or self.rel_tol <= 0.0:
            raise ValueError("outer loop limits must be positive")
        if self.varsigma_grid < 3:
            raise ValueError("varsigma_grid needs at least 3 points")
        if self.pair_max_sweeps < 1 or self.pair_tol <= 0.0:
            raise ValueError("block-pair limits must be positive")

    @classmethod
    def from_settings(cls, **overrides) -> "PowMinParams":
        defaults = settings.RIS_OPTIM["POWMIN"]
        qcqp = settings.RIS_OPTIM["QCQP"]
        values = dict(
            alpha=defaults["ALPHA"],
            epsilon=defaults["EPSILON"],
            max_iter=defaults["MAX_ITER"],
            rel_tol=defaults["REL_TOL"],
            dinkelbach_tol=defaults["DINKELBACH_TOL"],
            dinkelbach_max_iter=defaults["DINKELBACH_MAX_ITER"],
            manifold=ManifoldParams.from_settings(),
            varsigma_grid=defaults["VARSIGMA_GRID"],
            varsigma_xatol=defaults["VARSIGMA_XATOL"],
            varsigma_max_sweeps=defaults["VARSIGMA_MAX_SWEEPS"],
            scale_up_cap=defaults["SCALE_UP_CAP"],
            qcqp_tol=qcqp["TOL"],
            qcqp_max_iter=qcqp["MAX_ITER"],
            pair_max_sweeps=defaults["PAIR_MAX_SWEEPS"],
            pair_tol=defaults["PAIR_TOL"],
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class QosBalanceState:
    """Dinkelbach ratio and the per-user terms it was taken over.

    ``f`` is gamma_k (interference + noise) and ``g`` the desired signal
    power, both divided by the user's noise at the start of the update, so
    f_k / g_k = gamma_k / SINR_k.
    """

    varpi: float
    f: np.ndarray
    g: np.ndarray
    users: tuple

    @property
    def ratios(self) -> np.ndarray:
        return self.f / self.g


@dataclass(frozen=True)
class FeasibilityReport:
    full_rank: bool
    rank: int
    required: int
    singular_values: np.ndarray
