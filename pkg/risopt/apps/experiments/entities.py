import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, TypedDict, Union

from downlink.entities import BeamformerSet, ConstraintReport, RisState, SolveTrace
from scenarios.entities import Mode, Scenario


class Problem(str, enum.Enum):
    SUMRATE = "sumrate"
    POWMIN = "powmin"


class SweepParameter(str, enum.Enum):
    BUDGET_BS = "P_T"
    BUDGET_RIS = "P_R"
    ELEMENTS = "M"
    USERS_REFLECT = "K_r"
    SINR_TARGET = "gamma"

    @property
    def config_key(self) -> str:
        return {
            SweepParameter.BUDGET_BS: "budget_bs_dbm",
            SweepParameter.BUDGET_RIS: "budget_ris_dbm",
            SweepParameter.ELEMENTS: "n_elements",
            SweepParameter.USERS_REFLECT: "n_users_reflect",
            SweepParameter.SINR_TARGET: "sinr_target_db",
        }[self]

    @property
    def is_integer(self) -> bool:
        return self in (SweepParameter.ELEMENTS, SweepParameter.USERS_REFLECT)

    @property
    def unit(self) -> str:
        return {
            SweepParameter.BUDGET_BS: "dbm",
            SweepParameter.BUDGET_RIS: "dbm",
            SweepParameter.ELEMENTS: "count",
            SweepParameter.USERS_REFLECT: "count",
            SweepParameter.SINR_TARGET: "db",
        }[self]


class TrialStatus(str, enum.Enum):
    OK = "ok"
    INFEASIBLE = "infeasible"
    FAILED = "failed"


@dataclass(frozen=True)
class SweepSpec:
    parameter: SweepParameter
    values: Tuple[Union[int, float], ...]
    trials: int
    problem: Problem
    modes: Tuple[Mode, ...]
    base_config: Dict = field(default_factory=dict)
    base_seed: int = 0
    source: str = ""
    solver: Dict = field(default_factory=dict)


@dataclass
class SolveOutcome:
    scenario: Scenario
    problem: Problem
    mode: Mode
    ris: RisState
    beamformers: BeamformerSet
    trace: SolveTrace
    report: ConstraintReport


class TrialResult(TypedDict):
    value: Union[int, float]
    mode: str
    trial: int
    seed: int
    status: str
    objective: Optional[float]
    iterations: Optional[int]
    converged: bool
    wall_time_s: float
    message: str
    curve: List[float]


class AggregateRow(TypedDict):
    value: Union[int, float]
    mode: str
    trials: int
    failures: int
    mean_objective: float
    std_error: float
    mean_iterations: float
    mean_wall_time_s: float
