import logging
import math
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from downlink.entities import BeamformerSet, ConstraintReport, RisState
from scenarios.entities import ChannelKind, Mode, Scenario
from scenarios.services import ScenarioService

logger = logging.getLogger(__name__)


class DownlinkService:
    """Physical quantities of a (scenario, RIS state, beamformers) triple.

    Row k of ``effective_rows`` is h~_k^H, the conjugate-transposed
    equivalent channel of user k, so ``effective_rows @ W`` holds every
    received amplitude h~_k^H w_j.
    """

    @classmethod
    def side_amplitudes(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        return np.where(
            scenario.reflect_mask[:, None],
            ris.reflect_amplitude[None, :],
            ris.transmit_amplitude[None, :],
        )

    @classmethod
    def side_phases(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        return np.where(
            scenario.reflect_mask[:, None], ris.phi_r[None, :], ris.phi_t[None, :]
        )

    @classmethod
    def cascade(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        """K x M coefficients of h_{r,k}^H Phi E sqrt(A)."""
        return (
            scenario.h_r.conj()
            * cls.side_phases(scenario, ris)
            * cls.side_amplitudes(scenario, ris)
            * np.sqrt(ris.amp)[None, :]
        )

    @classmethod
    def effective_rows(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        return scenario.h_d.conj() + cls.cascade(scenario, ris) @ scenario.G

    @classmethod
    def equivalent_channel(cls, scenario: Scenario, ris: RisState, k: int) -> np.ndarray:
        return cls.effective_rows(scenario, ris)[k].conj()

    @classmethod
    def received(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> np.ndarray:
        return cls.effective_rows(scenario, ris) @ W.w

    @classmethod
    def ris_noise(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        """Amplified RIS thermal noise seen by each user."""
        weights = np.abs(scenario.h_r) ** 2 * cls.side_amplitudes(scenario, ris) ** 2
        return scenario.noise_ris * weights @ ris.amp

    @classmethod
    def noise(cls, scenario: Scenario, ris: RisState) -> np.ndarray:
        return scenario.noise_user + cls.ris_noise(scenario, ris)

    @classmethod
    def signal_and_interference(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet
    ) -> Tuple[np.ndarray, np.ndarray]:
        power = np.abs(cls.received(scenario, ris, W)) ** 2
        signal = np.diag(power).copy()
        off_diagonal = ~np.eye(scenario.n_users, dtype=bool)
        interference = np.where(off_diagonal, power, 0.0).sum(axis=1)
        return signal, interference

    @classmethod
    def sinrs(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> np.ndarray:
        signal, interference = cls.signal_and_interference(scenario, ris, W)
        return signal / (interference + cls.noise(scenario, ris))

    @classmethod
    def sinr(cls, scenario: Scenario, ris: RisState, W: BeamformerSet, k: int) -> float:
        return float(cls.sinrs(scenario, ris, W)[k])

    @classmethod
    def sum_rate(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> float:
        return float(np.sum(np.log2(1.0 + cls.sinrs(scenario, ris, W))))

    @classmethod
    def bs_power(cls, W: BeamformerSet) -> float:
        return float(np.sum(np.abs(W.w) ** 2))

    @classmethod
    def incident_power(cls, scenario: Scenario, W: BeamformerSet) -> np.ndarray:
        """Per-element signal power before amplification, sum_k |g_m^H w_k|^2."""
        return np.sum(np.abs(scenario.G @ W.w) ** 2, axis=1)

    @classmethod
    def ris_power(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> float:
        amplified = np.sqrt(ris.amp)[:, None] * (scenario.G @ W.w)
        return float(
            np.sum(np.abs(amplified) ** 2) + scenario.noise_ris * np.sum(ris.amp)
        )

    @classmethod
    def element_powers(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet
    ) -> np.ndarray:
        return ris.amp * (cls.incident_power(scenario, W) + scenario.noise_ris)

    @classmethod
    def element_power(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, m: int
    ) -> float:
        return float(cls.element_powers(scenario, ris, W)[m])

    @classmethod
    def amplified_signal_power(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet
    ) -> float:
        """sum_k ||A G w_k||^2, the RIS term of the power-minimization cost."""
        return float(ris.amp @ cls.incident_power(scenario, W))

    @classmethod
    def check_constraints(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: Optional[np.ndarray] = None,
    ) -> ConstraintReport:
        unit_modulus = max(
            float(np.max(np.abs(np.abs(ris.phi_r) - 1.0), initial=0.0)),
            float(np.max(np.abs(np.abs(ris.phi_t) - 1.0), initial=0.0)),
        )
        varsigma_violation = max(
            0.0,
            float(np.max(-ris.varsigma, initial=0.0)),
            float(np.max(ris.varsigma - 1.0, initial=0.0)),
        )
        if targets is None:
            sinr_slack = np.zeros(0)
            targets = np.zeros(0)
        else:
            targets = np.asarray(targets, dtype=float)
            sinr_slack = cls.sinrs(scenario, ris, W) - targets

        return ConstraintReport(
            bs_power_slack=scenario.budget_bs - cls.bs_power(W),
            ris_power_slack=scenario.budget_ris - cls.ris_power(scenario, ris, W),
            per_element_slack=scenario.budget_element
            - cls.element_powers(scenario, ris, W),
            unit_modulus_residual=unit_modulus,
            varsigma_range_violation=varsigma_violation,
            sinr_slack=sinr_slack,
            sinr_targets=targets,
        )


class InitService:
    @classmethod
    def initial_varsigma(cls, n_elements: int, mode: Mode) -> np.ndarray:
        mode = Mode(mode)
        if mode == Mode.SD:
            varsigma = np.zeros(n_elements)
            varsigma[: math.ceil(n_elements / 2)] = 1.0
            return varsigma
        if mode == Mode.RO:
            return np.ones(n_elements)
        return np.full(n_elements, 1.0 / math.sqrt(2.0))

    @classmethod
    def random_phases(cls, scenario: Scenario, index: int) -> np.ndarray:
        rng = ScenarioService.stream(scenario.seed, ChannelKind.INIT_PHASES, index)
        return np.exp(2j * np.pi * rng.uniform(size=scenario.n_elements))

    @classmethod
    def mmse_beamformers(
        cls, rows: np.ndarray, noise: np.ndarray, power: float
    ) -> BeamformerSet:
        """Regularized MMSE precoders, (sum_j h~_j h~_j^H + K sigma^2/P I)^-1 h~_k,
        scaled so that sum_k ||w_k||^2 = power."""
        n_users, n_antennas = rows.shape
        regularization = float(np.mean(noise)) * n_users / power
        gram = rows.conj().T @ rows + regularization * np.eye(n_antennas)
        directions = scipy.linalg.solve(gram, rows.conj().T, assume_a="her")
        norm = np.linalg.norm(directions)
        if norm == 0.0:
            directions = rows.conj().T
            norm = np.linalg.norm(directions)
        return BeamformerSet(directions * math.sqrt(power) / norm)

    @classmethod
    def amplification_cap(
        cls, scenario: Scenario, W: BeamformerSet, use_ris_budget: bool = True
    ) -> np.ndarray:
        """Largest uniform gain a_max^2 meeting the RIS budget, clipped per
        element to c_m = p_max,m / (sum_k |g_m^H w_k|^2 + sigma_v^2)."""
        incident = DownlinkService.incident_power(scenario, W)
        element_cap = scenario.budget_element / (incident + scenario.noise_ris)
        if not use_ris_budget:
            return element_cap
        uniform = scenario.budget_ris / (
            np.sum(incident) + scenario.noise_ris * scenario.n_elements
        )
        return np.minimum(uniform, element_cap)

    @classmethod
    def init_state(
        cls, scenario: Scenario, mode: Optional[Mode] = None
    ) -> Tuple[RisState, BeamformerSet]:
        mode = Mode(mode or scenario.mode)
        m = scenario.n_elements
        varsigma = cls.initial_varsigma(m, mode)
        phi_r = cls.random_phases(scenario, 0)
        phi_t = cls.random_phases(scenario, 1)

        # gains from a direct-link precoder first, then MMSE on the cascade
        direct = InitService.mmse_beamformers(
            scenario.h_d.conj(), scenario.noise_user, scenario.budget_bs
        )
        ris = RisState(phi_r, phi_t, cls.amplification_cap(scenario, direct), varsigma)
        W = cls.mmse_beamformers(
            DownlinkService.effective_rows(scenario, ris),
            DownlinkService.noise(scenario, ris),
            scenario.budget_bs,
        )
        ris = ris.replace(amp=cls.amplification_cap(scenario, W))
        logger.debug(
            "initial state: mode=%s sum-rate %.4f bit/s/Hz",
            mode.value,
            DownlinkService.sum_rate(scenario, ris, W),
        )
        return ris, W
