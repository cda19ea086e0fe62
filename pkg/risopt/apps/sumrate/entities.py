from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from manifold.entities import ManifoldParams


@dataclass(frozen=True)
class AuxState:
    """Fractional-programming auxiliaries: gamma (SINR surrogate) and tau."""

    gamma: np.ndarray
    tau: np.ndarray


@dataclass(frozen=True)
class SumRateParams:
    max_iter: int = 100
    rel_tol: float = 1e-4
    manifold: ManifoldParams = field(default_factory=ManifoldParams)
    varsigma_tol: float = 1e-6
    varsigma_max_sweeps: int = 50
    delta: float = 1e-6
    qcqp_tol: float = 1e-8
    qcqp_max_iter: int = 500
    pair_max_sweeps: int = 10
    pair_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1 or self.rel_tol <= 0 or self.delta <= 0:
            raise ValueError("sum-rate parameters must be positive")
        if self.pair_max_sweeps < 1 or self.pair_tol <= 0:
            raise ValueError("block-pair limits must be positive")

    @classmethod
    def from_settings(cls, **overrides) -> "SumRateParams":
        defaults = settings.RIS_OPTIM["SUMRATE"]
        qcqp = settings.RIS_OPTIM["QCQP"]
        values = dict(
            max_iter=defaults["MAX_ITER"],
            rel_tol=defaults["REL_TOL"],
            manifold=ManifoldParams.from_settings(),
            varsigma_tol=defaults["VARSIGMA_TOL"],
            varsigma_max_sweeps=defaults["VARSIGMA_MAX_SWEEPS"],
            delta=defaults["DELTA"],
            qcqp_tol=qcqp["TOL"],
            qcqp_max_iter=qcqp["MAX_ITER"],
            pair_max_sweeps=defaults["PAIR_MAX_SWEEPS"],
            pair_tol=defaults["PAIR_TOL"],
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class VarsigmaCoefficients:
    """F(s) = s^T Q_r s - 2 b_r^T s + t^T Q_t t - 2 b_t^T t, t = sqrt(1 - s^2)."""

    Q_r: np.ndarray
    Q_t: np.ndarray
    b_r: np.ndarray
    b_t: np.ndarray
