import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, TypedDict

import numpy as np


def _frozen(array, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class RisState:
    """Surface configuration. ``amp`` holds the power gains a_m; the
    amplitude applied to the signal is sqrt(a_m)."""

    phi_r: np.ndarray
    phi_t: np.ndarray
    amp: np.ndarray
    varsigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi_r", _frozen(self.phi_r, complex))
        object.__setattr__(self, "phi_t", _frozen(self.phi_t, complex))
        object.__setattr__(self, "amp", _frozen(self.amp, float))
        object.__setattr__(self, "varsigma", _frozen(self.varsigma, float))

    @property
    def n_elements(self) -> int:
        return self.amp.shape[0]

    @property
    def reflect_amplitude(self) -> np.ndarray:
        return self.varsigma

    @property
    def transmit_amplitude(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.varsigma**2, 0.0, None))

    def replace(self, **changes) -> "RisState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BeamformerSet:
    """BS precoders stored column-wise: ``w[:, k]`` is w_k."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(self.w, complex))

    @property
    def n_users(self) -> int:
        return self.w.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.w[:, k]

    def vec(self) -> np.ndarray:
        """Columns stacked as [w_1; ...; w_K]."""
        return self.w.T.reshape(-1)

    @classmethod
    def from_vec(cls, x: np.ndarray, n_users: int) -> "BeamformerSet":
        return cls(np.asarray(x).reshape(n_users, -1).T)


@dataclass(frozen=True)
class ConstraintReport:
    """Slacks are budget minus achieved (SINR: achieved minus target)."""

    bs_power_slack: float
    ris_power_slack: float
    per_element_slack: np.ndarray
    unit_modulus_residual: float
    varsigma_range_violation: float
    sinr_slack: np.ndarray
    sinr_targets: np.ndarray

    def is_feasible(
        self,
        atol: float = 1e-8,
        sinr_rtol: float = 1e-6,
        check_bs: bool = True,
        check_ris: bool = True,
    ) -> bool:
        if check_bs and self.bs_power_slack < -atol:
            return False
        if check_ris and self.ris_power_slack < -atol:
            return False
        if self.per_element_slack.size and self.per_element_slack.min() < -atol:
            return False
        if self.unit_modulus_residual > 1e-10:
            return False
        if self.varsigma_range_violation > atol:
            return False
        if self.sinr_slack.size and np.any(
            self.sinr_slack < -sinr_rtol * self.sinr_targets
        ):
            return False
        return True

    @property
    def min_element_slack(self) -> float:
        return float(self.per_element_slack.min()) if self.per_element_slack.size else 0.0


class TraceRecord(TypedDict, total=False):
    iteration: int
    objective: float
    surrogate: float
    total_power_w: float
    weighted_objective: float
    power_after_pair: float
    min_sinr_ratio: float
    bs_power_slack: float
    ris_power_slack: float
    min_element_slack: float
    newton_steps: int
    manifold_iterations: int
    pair_sweeps: int
    timings: Dict[str, float]


@dataclass
class SolveTrace:
    """Per-outer-iteration audit trail; record 0 is the initial point."""

    problem: str
    mode: str
    records: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    message: Optional[str] = None

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([record["objective"] for record in self.records])

    @property
    def final_objective(self) -> float:
        return self.records[-1]["objective"] if self.records else float("nan")
