import enum
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


class Mode(str, enum.Enum):
    """How the reflect/transmit amplitude split is chosen."""

    OP = "op"  # optimized per element
    EP = "ep"  # equal power, 1/sqrt(2) everywhere
    SD = "sd"  # space division, contiguous reflect/transmit groups
    RO = "ro"  # reflect only


class ChannelKind(enum.IntEnum):
    """Stream labels for the per-channel random generators."""

    USER_ANGLES = 0
    BS_RIS = 1
    DIRECT = 2
    RIS_USER = 3
    INIT_PHASES = 4


@dataclass(frozen=True)
class PathLossExponents:
    bs_ris: float = 2.5
    ris_user: float = 2.0
    direct_reflect: float = 3.6
    direct_transmit: float = 4.2


@dataclass(frozen=True)
class LinkGeometry:
    """Sines of the departure/arrival angles of a link, measured from the
    array broadside. Both arrays are uniform linear with half-wavelength
    spacing, so the zero default gives an all-ones line-of-sight matrix."""

    departure_sin: float = 0.0
    arrival_sin: float = 0.0

    def los_matrix(self, rows: int, cols: int) -> np.ndarray:
        arrival = np.exp(1j * np.pi * np.arange(rows) * self.arrival_sin)
        departure = np.exp(1j * np.pi * np.arange(cols) * self.departure_sin)
        return np.outer(arrival, departure.conj())


@dataclass(frozen=True)
class ScenarioConfig:
    """Problem-instance parameters in SI units (watts, meters, linear gains)."""

    n_antennas: int
    n_elements: int
    n_users: int
    n_users_reflect: int
    bs_ris_distance: float
    user_radius: float
    pathloss_ref_gain: float
    reference_distance: float
    exponents: PathLossExponents
    rician_factor: float
    noise_user: float
    noise_ris: float
    budget_bs: float
    budget_ris: float
    budget_element: Tuple[float, ...]
    sinr_targets: Tuple[float, ...]
    mode: Mode = Mode.OP
    seed: int = 0


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True, order="C")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Scenario:
    """An immutable problem instance.

    ``G`` is M x N, ``h_d`` is K x N and ``h_r`` is K x M; row k of the
    user channels is the vector h_{d,k} (resp. h_{r,k}), so the received
    amplitude of user k for beam w is ``h_d[k].conj() @ w`` plus the RIS path.
    """

    config: ScenarioConfig
    G: np.ndarray
    h_d: np.ndarray
    h_r: np.ndarray
    set_r: Tuple[int, ...]
    set_t: Tuple[int, ...]
    user_positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("G", "h_d", "h_r", "user_positions"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_antennas(self) -> int:
        return self.config.n_antennas

    @property
    def n_elements(self) -> int:
        return self.config.n_elements

    @property
    def n_users(self) -> int:
        return self.config.n_users

    @property
    def mode(self) -> Mode:
        return self.config.mode

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def reflect_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_users, dtype=bool)
        mask[list(self.set_r)] = True
        return mask

    @property
    def noise_user(self) -> np.ndarray:
        return np.full(self.n_users, self.config.noise_user)

    @property
    def noise_ris(self) -> float:
        return self.config.noise_ris

    @property
    def budget_bs(self) -> float:
        return self.config.budget_bs

    @property
    def budget_ris(self) -> float:
        return self.config.budget_ris

    @property
    def budget_element(self) -> np.ndarray:
        return np.asarray(self.config.budget_element, dtype=float)

    @property
    def sinr_targets(self) -> np.ndarray:
        return np.asarray(self.config.sinr_targets, dtype=float)

    def side_users(self, side: str) -> Tuple[int, ...]:
        return self.set_r if side == "r" else self.set_t
