import functools
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special
from convex.entities import (
    ConeConstraint,
    QcqpProblem,
    QcqpStatus,
    QuadraticConstraint,
)
from convex.services import QcqpService
from downlink.entities import BeamformerSet, RisState, SolveTrace, TraceRecord
from downlink.services import DownlinkService, InitService
from manifold.exceptions import DegenerateRetractionError, NonFiniteObjectiveError
from manifold.services import CircleManifold
from powmin.entities import FeasibilityReport, PowMinParams, QosBalanceState
from powmin.exceptions import InfeasibleStart, PowerMinInfeasible
from scenarios.entities import Mode, Scenario
from sumrate.exceptions import SubproblemFailure

logger = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-10
RATIO_SLACK = 1e-6
TARGET_RTOL = 1e-12
IMPROVEMENT_SLACK = 1e-12
PHASE_STEP = 0.1


@dataclass(frozen=True)
class PhaseTerms:
    """Targeted users of one side: Z[i, j] = direct[i, j] + coeff[i, j] . phi."""

    users: np.ndarray
    targets: np.ndarray
    direct: np.ndarray
    coeff: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class SplitTerms:
    """All targeted users as functions of the amplitude split.

    Z[i, j] = direct[i, j] + sum_m coeff[i, j, m] e_im(varsigma), where e is
    varsigma_m on the reflection side and sqrt(1 - varsigma_m^2) otherwise.
    """

    users: np.ndarray
    targets: np.ndarray
    reflect: np.ndarray
    direct: np.ndarray
    coeff: np.ndarray
    noise_floor: np.ndarray
    noise_weights: np.ndarray
    reference: np.ndarray

    def split(self, varsigma: np.ndarray) -> np.ndarray:
        transmit = np.sqrt(np.clip(1.0 - varsigma**2, 0.0, None))
        return np.where(self.reflect[:, None], varsigma[None, :], transmit[None, :])


def _balance(targets, users, Z, noise, reference):
    """Normalized (f, g) of every targeted user from its received row Z."""
    power = np.abs(Z) ** 2
    rows = np.arange(users.size)
    signal = power[..., rows, users]
    interference = power.sum(axis=-1) - signal
    return targets * (interference + noise) / reference, signal / reference


def _max_ratio(f: np.ndarray, g: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.max(np.where(g > 0.0, f / np.where(g > 0.0, g, 1.0), np.inf)))


def _keeps_targets(before: float, after: float) -> bool:
    """Worst SINR ratio drops by at most the slack and stays on the targets
    if it was there."""
    return after >= before - RATIO_SLACK and after >= min(before, 1.0) - TARGET_RTOL


class PowerMinService:
    """Weighted BS + RIS power minimization under per-user SINR targets."""

    # ------------------------------------------------------------ quantities

    @classmethod
    def total_power(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> float:
        return DownlinkService.bs_power(W) + DownlinkService.amplified_signal_power(
            scenario, ris, W
        )

    @classmethod
    def weighted_power(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, alpha: float
    ) -> float:
        return alpha * DownlinkService.bs_power(W) + (
            1.0 - alpha
        ) * DownlinkService.amplified_signal_power(scenario, ris, W)

    @classmethod
    def min_sinr_ratio(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        users=None,
    ) -> float:
        targets = np.asarray(targets, dtype=float)
        mask = targets > 0.0
        if users is not None:
            chosen = np.zeros_like(mask)
            chosen[list(users)] = True
            mask &= chosen
        if not np.any(mask):
            return math.inf
        sinrs = DownlinkService.sinrs(scenario, ris, W)
        return float(np.min(sinrs[mask] / targets[mask]))

    @classmethod
    def meets_targets(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        rtol: float = 0.0,
    ) -> bool:
        return cls.min_sinr_ratio(scenario, ris, W, targets) >= 1.0 - rtol

    @classmethod
    def feasibility_precheck(cls, scenario: Scenario) -> FeasibilityReport:
        """Numerical rank of G^H H_r + H_d; full rank K means any finite
        targets are reachable."""
        channel = scenario.G.conj().T @ scenario.h_r.T + scenario.h_d.T
        values = scipy.linalg.svdvals(channel)
        largest = float(values.max(initial=0.0))
        rank = int(np.sum(values > RANK_THRESHOLD * largest)) if largest > 0 else 0
        return FeasibilityReport(
            full_rank=rank == scenario.n_users,
            rank=rank,
            required=scenario.n_users,
            singular_values=values,
        )

    # ---------------------------------------------------------- beamformers

    @classmethod
    def beamformer_problem(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        alpha: float,
    ) -> Tuple[QcqpProblem, float, np.ndarray]:
        """SOCP over y = vec(W) / scale; also returns the rotated start."""
        n, k_total = scenario.n_antennas, scenario.n_users
        rows = DownlinkService.effective_rows(scenario, ris)
        noise = DownlinkService.noise(scenario, ris)
        G = scenario.G
        norm = float(np.linalg.norm(W.w))
        scale = norm if norm > 0.0 else math.sqrt(scenario.budget_bs)

        eye_users = np.eye(k_total)
        weight = alpha * np.eye(n) + (1.0 - alpha) * G.conj().T @ (ris.amp[:, None] * G)
        P = 2.0 * np.kron(eye_users, weight) * scale**2

        cones = []
        for k in np.flatnonzero(targets > 0.0):
            root = math.sqrt(targets[k])
            A = np.zeros((k_total, n * k_total), dtype=complex)
            others = [j for j in range(k_total) if j != k]
            for row, j in enumerate(others):
                A[row, j * n : (j + 1) * n] = root * rows[k] * scale
            a = np.zeros(k_total, dtype=complex)
            a[-1] = math.sqrt(targets[k] * noise[k])
            c = np.zeros(n * k_total, dtype=complex)
            c[k * n : (k + 1) * n] = rows[k].conj() * scale
            cones.append(ConeConstraint(A, a, c, 0.0, f"sinr[{k}]"))

        quadratic = []
        for m in np.flatnonzero(ris.amp > 0.0):
            gram = np.outer(G[m].conj(), G[m])
            quadratic.append(
                QuadraticConstraint(
                    2.0 * ris.amp[m] * np.kron(eye_users, gram) * scale**2,
                    np.zeros(n * k_total),
                    scenario.budget_element[m] - ris.amp[m] * scenario.noise_ris,
                    f"element_power[{m}]",
                )
            )
        problem = QcqpProblem.from_complex(
            P, np.zeros(n * k_total), 0.0, quadratic, cones
        )

        # rotate each w_k so that h~_k^H w_k is real and non-negative
        signal = np.diag(rows @ W.w)
        rotated = W.w * np.exp(-1j * np.angle(signal))[None, :]
        return problem, scale, rotated.T.reshape(-1) / scale

    @classmethod
    def update_beamformers_min(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        params: Optional[PowMinParams] = None,
        counters: Optional[Counter] = None,
    ) -> BeamformerSet:
        params = params or PowMinParams()
        targets = np.asarray(targets, dtype=float)
        if not np.any(targets > 0.0):
            return BeamformerSet(np.zeros_like(W.w))

        problem, scale, start = cls.beamformer_problem(
            scenario, ris, W, targets, params.alpha
        )
        solution = QcqpService.solve_qcqp(
            problem, tol=params.qcqp_tol, max_iter=params.qcqp_max_iter, x0=start
        )
        if counters is not None:
            counters["newton_steps"] += solution.newton_steps
        if solution.status == QcqpStatus.INFEASIBLE:
            report = DownlinkService.check_constraints(scenario, ris, W, targets)
            logger.warning("beamformer SOCP infeasible: %s", solution.certificate)
            raise PowerMinInfeasible(
                f"SINR targets unreachable at the current RIS state: {solution.certificate}",
                report=report,
            )

        candidate = BeamformerSet.from_vec(solution.x * scale, scenario.n_users)
        if cls.meets_targets(scenario, ris, W, targets, TARGET_RTOL):
            old = cls.weighted_power(scenario, ris, W, params.alpha)
            new = cls.weighted_power(scenario, ris, candidate, params.alpha)
            if new > old + IMPROVEMENT_SLACK * (1.0 + old):
                logger.debug("beamformer update rejected: %.6e -> %.6e", old, new)
                return W
        return candidate

    # -------------------------------------------------------- amplification

    @classmethod
    def amplification_problem(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        alpha: float,
    ) -> Tuple[QcqpProblem, float]:
        """SOCP over x = sqrt(a) / scale with each user's signal phase frozen
        at the current point, an inner approximation of the SINR set."""
        m_total, k_total = scenario.n_elements, scenario.n_users
        direct = scenario.h_d.conj() @ W.w
        incident = scenario.G @ W.w
        coeff = (
            scenario.h_r.conj()
            * DownlinkService.side_phases(scenario, ris)
            * DownlinkService.side_amplitudes(scenario, ris)
        )
        V = coeff[:, None, :] * incident.T[None, :, :]
        current = direct + V @ np.sqrt(ris.amp)

        rho = np.sum(np.abs(incident) ** 2, axis=1)
        cap = scenario.budget_element / (rho + scenario.noise_ris)
        scale = float(np.sqrt(np.max(cap)))
        noise_rows = (
            math.sqrt(scenario.noise_ris)
            * np.abs(scenario.h_r)
            * DownlinkService.side_amplitudes(scenario, ris)
        )

        cones = []
        for k in np.flatnonzero(targets > 0.0):
            root = math.sqrt(targets[k])
            others = [j for j in range(k_total) if j != k]
            rotation = np.exp(-1j * np.angle(current[k, k]))
            A = np.vstack(
                [
                    V[k, others].real,
                    V[k, others].imag,
                    np.diag(noise_rows[k]),
                    np.zeros((1, m_total)),
                ]
            )
            a = np.concatenate(
                [
                    direct[k, others].real,
                    direct[k, others].imag,
                    np.zeros(m_total),
                    [math.sqrt(scenario.noise_user[k])],
                ]
            )
            cones.append(
                ConeConstraint(
                    root * A * scale,
                    root * a,
                    np.real(rotation * V[k, k]) * scale,
                    float(np.real(rotation * direct[k, k])),
                    f"sinr[{k}]",
                )
            )

        eye = np.eye(m_total)
        quadratic = []
        for m in range(m_total):
            quadratic.append(
                QuadraticConstraint(
                    2.0 * np.outer(eye[m], eye[m]) * scale**2,
                    np.zeros(m_total),
                    cap[m],
                    f"element_power[{m}]",
                )
            )
            quadratic.append(
                QuadraticConstraint(
                    np.zeros((m_total, m_total)), eye[m] * scale, 0.0, f"sign[{m}]"
                )
            )
        problem = QcqpProblem.real(
            2.0 * (1.0 - alpha) * np.diag(rho) * scale**2,
            np.zeros(m_total),
            0.0,
            quadratic,
            cones,
        )
        return problem, scale

    @classmethod
    def update_amplification_min(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        params: Optional[PowMinParams] = None,
        counters: Optional[Counter] = None,
    ) -> np.ndarray:
        params = params or PowMinParams()
        targets = np.asarray(targets, dtype=float)
        if not np.any(targets > 0.0):
            return np.zeros_like(ris.amp)

        problem, scale = cls.amplification_problem(
            scenario, ris, W, targets, params.alpha
        )
        solution = QcqpService.solve_qcqp(
            problem,
            tol=params.qcqp_tol,
            max_iter=params.qcqp_max_iter,
            x0=np.sqrt(ris.amp) / scale,
        )
        if counters is not None:
            counters["newton_steps"] += solution.newton_steps
        if solution.status == QcqpStatus.INFEASIBLE:
            report = DownlinkService.check_constraints(scenario, ris, W, targets)
            logger.warning("amplification SOCP infeasible: %s", solution.certificate)
            raise PowerMinInfeasible(
                f"SINR targets unreachable over the RIS gains: {solution.certificate}",
                report=report,
            )

        cap = InitService.amplification_cap(scenario, W, use_ris_budget=False)
        amp = np.minimum((np.clip(solution.x, 0.0, None) * scale) ** 2, cap)
        candidate = ris.replace(amp=amp)
        if not cls.meets_targets(scenario, candidate, W, targets, TARGET_RTOL):
            logger.debug("amplification update rejected: SINR targets violated")
            return ris.amp
        old = DownlinkService.amplified_signal_power(scenario, ris, W)
        new = DownlinkService.amplified_signal_power(scenario, candidate, W)
        if new > old + IMPROVEMENT_SLACK * (1.0 + old) and cls.meets_targets(
            scenario, ris, W, targets, TARGET_RTOL
        ):
            logger.debug("amplification update rejected: %.6e -> %.6e", old, new)
            return ris.amp
        return amp

    @classmethod
    def update_pair_min(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        params: Optional[PowMinParams] = None,
        counters: Optional[Counter] = None,
    ) -> Tuple[RisState, BeamformerSet]:
        """Beamformer and amplification blocks in turn until the weighted
        power stops falling. Starting from a state that meets the targets,
        no sweep raises the weighted power."""
        params = params or PowMinParams()
        feasible = cls.meets_targets(scenario, ris, W, targets, TARGET_RTOL)
        value = cls.weighted_power(scenario, ris, W, params.alpha)
        sweeps = 0
        for sweeps in range(1, params.pair_max_sweeps + 1):
            W = cls.update_beamformers_min(scenario, ris, W, targets, params, counters)
            ris = ris.replace(
                amp=cls.update_amplification_min(
                    scenario, ris, W, targets, params, counters
                )
            )
            updated = cls.weighted_power(scenario, ris, W, params.alpha)
            drop = (value - updated) / max(value, 1e-300)
            value = updated
            if feasible and drop < params.pair_tol:
                break
            # the first sweep always lands on the targets
            feasible = True
        if counters is not None:
            counters["pair_sweeps"] += sweeps
        return ris, W

    # --------------------------------------------------------------- phases

    @classmethod
    def phase_terms(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        side: str,
    ) -> Optional[PhaseTerms]:
        targets = np.asarray(targets, dtype=float)
        users = np.array(
            [k for k in scenario.side_users(side) if targets[k] > 0.0], dtype=int
        )
        if users.size == 0:
            return None
        incident = scenario.G @ W.w
        coeff = (
            scenario.h_r.conj()
            * DownlinkService.side_amplitudes(scenario, ris)
            * np.sqrt(ris.amp)[None, :]
        )[users]
        return PhaseTerms(
            users=users,
            targets=targets[users],
            direct=(scenario.h_d.conj() @ W.w)[users],
            coeff=coeff[:, None, :] * incident.T[None, :, :],
            noise=DownlinkService.noise(scenario, ris)[users],
        )

    @classmethod
    def _phase_rows(cls, terms: PhaseTerms, phi: np.ndarray) -> np.ndarray:
        return terms.direct + terms.coeff @ phi

    @classmethod
    def phase_state(cls, terms: PhaseTerms, phi: np.ndarray) -> QosBalanceState:
        f, g = _balance(
            terms.targets,
            terms.users,
            cls._phase_rows(terms, phi),
            terms.noise,
            terms.noise,
        )
        return QosBalanceState(_max_ratio(f, g), f, g, tuple(terms.users))

    @classmethod
    def lse_phase_objective(
        cls, terms: PhaseTerms, phi: np.ndarray, varpi: float, epsilon: float
    ) -> float:
        """epsilon * log sum_k exp((f_k - varpi g_k) / epsilon)."""
        f, g = _balance(
            terms.targets,
            terms.users,
            cls._phase_rows(terms, phi),
            terms.noise,
            terms.noise,
        )
        return float(epsilon * scipy.special.logsumexp((f - varpi * g) / epsilon))

    @classmethod
    def lse_phase_gradient(
        cls, terms: PhaseTerms, phi: np.ndarray, varpi: float, epsilon: float
    ) -> np.ndarray:
        Z = cls._phase_rows(terms, phi)
        f, g = _balance(terms.targets, terms.users, Z, terms.noise, terms.noise)
        weights = scipy.special.softmax((f - varpi * g) / epsilon)

        rows = np.arange(terms.users.size)
        own = Z[rows, terms.users]
        total = 2.0 * np.einsum("kjm,kj->km", terms.coeff.conj(), Z)
        own_grad = 2.0 * terms.coeff[rows, terms.users].conj() * own[:, None]
        grad_f = terms.targets[:, None] * (total - own_grad)
        return weights @ ((grad_f - varpi * own_grad) / terms.noise[:, None])

    @classmethod
    def _balance_side(
        cls, terms: PhaseTerms, phi0: np.ndarray, params: PowMinParams, counters
    ) -> Tuple[np.ndarray, QosBalanceState]:
        phi = phi0
        state = cls.phase_state(terms, phi)
        for _ in range(params.dinkelbach_max_iter):
            varpi = state.varpi
            objective = functools.partial(
                cls.lse_phase_objective, terms, varpi=varpi, epsilon=params.epsilon
            )
            gradient = functools.partial(
                cls.lse_phase_gradient, terms, varpi=varpi, epsilon=params.epsilon
            )
            largest = float(np.max(np.abs(gradient(phi))))
            point, trace = CircleManifold.minimize_on_circles(
                objective,
                gradient,
                phi,
                params.manifold,
                initial_step=PHASE_STEP / largest if largest > 0.0 else None,
            )
            if counters is not None:
                counters["manifold_iterations"] += trace.iterations
            phi = point.phi
            state = cls.phase_state(terms, phi)
            if abs(state.varpi - varpi) <= params.dinkelbach_tol * abs(varpi):
                break
        return phi, state

    @classmethod
    def qos_balance_phases(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        params: Optional[PowMinParams] = None,
        counters: Optional[Counter] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        params = params or PowMinParams()
        targets = np.asarray(targets, dtype=float)
        phases = {"r": ris.phi_r, "t": ris.phi_t}
        for side in ("r", "t"):
            terms = cls.phase_terms(scenario, ris, W, targets, side)
            if terms is None:
                continue
            phi, state = cls._balance_side(terms, phases[side], params, counters)
            before = cls.min_sinr_ratio(scenario, ris, W, targets, terms.users)
            after = cls.min_sinr_ratio(
                scenario, ris.replace(**{f"phi_{side}": phi}), W, targets, terms.users
            )
            if not _keeps_targets(before, after):
                logger.debug(
                    "phase update on side %s kept previous: min ratio %.6f -> %.6f",
                    side,
                    before,
                    after,
                )
                continue
            phases[side] = phi
        return phases["r"], phases["t"]

    # ------------------------------------------------------ amplitude split

    @classmethod
    def split_terms(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
    ) -> Optional[SplitTerms]:
        targets = np.asarray(targets, dtype=float)
        users = np.flatnonzero(targets > 0.0)
        if users.size == 0:
            return None
        incident = scenario.G @ W.w
        coeff = (
            scenario.h_r.conj()
            * DownlinkService.side_phases(scenario, ris)
            * np.sqrt(ris.amp)[None, :]
        )[users]
        return SplitTerms(
            users=users,
            targets=targets[users],
            reflect=scenario.reflect_mask[users],
            direct=(scenario.h_d.conj() @ W.w)[users],
            coeff=coeff[:, None, :] * incident.T[None, :, :],
            noise_floor=scenario.noise_user[users],
            noise_weights=scenario.noise_ris
            * np.abs(scenario.h_r[users]) ** 2
            * ris.amp[None, :],
            reference=DownlinkService.noise(scenario, ris)[users],
        )

    @classmethod
    def _split_balance(cls, terms: SplitTerms, varsigma: np.ndarray):
        E = terms.split(np.asarray(varsigma, dtype=float))
        Z = terms.direct + np.einsum("kjm,km->kj", terms.coeff, E)
        noise = terms.noise_floor + np.sum(terms.noise_weights * E**2, axis=1)
        return _balance(terms.targets, terms.users, Z, noise, terms.reference)

    @classmethod
    def split_state(cls, terms: SplitTerms, varsigma: np.ndarray) -> QosBalanceState:
        f, g = cls._split_balance(terms, varsigma)
        return QosBalanceState(_max_ratio(f, g), f, g, tuple(terms.users))

    @classmethod
    def varsigma_min_objective(
        cls, terms: SplitTerms, varsigma: np.ndarray, varpi: float, epsilon: float
    ) -> float:
        f, g = cls._split_balance(terms, varsigma)
        return float(epsilon * scipy.special.logsumexp((f - varpi * g) / epsilon))

    @classmethod
    def varsigma_min_element_update(
        cls,
        terms: SplitTerms,
        varsigma: np.ndarray,
        m: int,
        varpi: float,
        params: Optional[PowMinParams] = None,
    ) -> float:
        """Minimize the smoothed objective over varsigma_m alone: grid scan,
        then a bounded scalar search inside the best grid cell."""
        params = params or PowMinParams()
        E = terms.split(np.asarray(varsigma, dtype=float))
        Z = terms.direct + np.einsum("kjm,km->kj", terms.coeff, E)
        noise = terms.noise_floor + np.sum(terms.noise_weights * E**2, axis=1)
        base_rows = Z - terms.coeff[:, :, m] * E[:, m][:, None]
        base_noise = noise - terms.noise_weights[:, m] * E[:, m] ** 2

        def values(s: np.ndarray) -> np.ndarray:
            transmit = np.sqrt(np.clip(1.0 - s**2, 0.0, None))
            e = np.where(terms.reflect[None, :], s[:, None], transmit[:, None])
            rows = base_rows[None] + terms.coeff[None, :, :, m] * e[:, :, None]
            f, g = _balance(
                terms.targets,
                terms.users,
                rows,
                base_noise[None] + terms.noise_weights[None, :, m] * e**2,
                terms.reference,
            )
            return params.epsilon * scipy.special.logsumexp(
                (f - varpi * g) / params.epsilon, axis=1
            )

        grid = np.linspace(0.0, 1.0, params.varsigma_grid)
        scan = values(grid)
        best = int(np.argmin(scan))
        low = grid[max(best - 1, 0)]
        high = grid[min(best + 1, grid.size - 1)]
        refined = scipy.optimize.minimize_scalar(
            lambda s: float(values(np.array([s]))[0]),
            bounds=(low, high),
            method="bounded",
            options={"xatol": params.varsigma_xatol},
        )
        candidates = np.array([float(varsigma[m]), grid[best], float(refined.x)])
        return float(candidates[int(np.argmin(values(candidates)))])

    @classmethod
    def update_varsigma_min(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        params: Optional[PowMinParams] = None,
    ) -> np.ndarray:
        params = params or PowMinParams()
        terms = cls.split_terms(scenario, ris, W, targets)
        if terms is None:
            return ris.varsigma

        varsigma = np.array(ris.varsigma, dtype=float, copy=True)
        varpi = cls.split_state(terms, varsigma).varpi
        for sweep in range(1, params.varsigma_max_sweeps + 1):
            for m in range(varsigma.size):
                varsigma[m] = cls.varsigma_min_element_update(
                    terms, varsigma, m, varpi, params
                )
            refreshed = cls.split_state(terms, varsigma).varpi
            change = abs(refreshed - varpi) / max(abs(varpi), 1e-300)
            varpi = refreshed
            if change <= params.dinkelbach_tol:
                break
        logger.debug("amplitude split: %d sweeps, varpi %.6e", sweep, varpi)

        before = cls.min_sinr_ratio(scenario, ris, W, targets)
        after = cls.min_sinr_ratio(scenario, ris.replace(varsigma=varsigma), W, targets)
        if not _keeps_targets(before, after):
            logger.debug(
                "amplitude split kept previous: min ratio %.6f -> %.6f", before, after
            )
            return ris.varsigma
        return varsigma

    # ------------------------------------------------------------ outer loop

    @classmethod
    def feasible_start(
        cls,
        scenario: Scenario,
        targets: np.ndarray,
        params: PowMinParams,
        mode: Mode,
    ) -> Tuple[RisState, BeamformerSet, int]:
        """Initial state, then MMSE at doubled transmit power until every
        target is met."""
        ris, W = InitService.init_state(scenario, mode)
        power = scenario.budget_bs
        for doublings in range(params.scale_up_cap + 1):
            if cls.meets_targets(scenario, ris, W, targets):
                return ris, W, doublings
            power *= 2.0
            W = InitService.mmse_beamformers(
                DownlinkService.effective_rows(scenario, ris),
                DownlinkService.noise(scenario, ris),
                power,
            )
            ris = ris.replace(
                amp=np.minimum(
                    ris.amp,
                    InitService.amplification_cap(scenario, W, use_ris_budget=False),
                )
            )
        report = DownlinkService.check_constraints(scenario, ris, W, targets)
        logger.warning(
            "no feasible start after %d power doublings", params.scale_up_cap
        )
        raise InfeasibleStart(
            f"SINR targets not met after {params.scale_up_cap} power doublings",
            report=report,
            state=(ris, W),
        )

    @classmethod
    def _record(
        cls,
        iteration: int,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        targets: np.ndarray,
        alpha: float,
        after_pair: float,
        counters: Counter,
        timings,
    ) -> TraceRecord:
        report = DownlinkService.check_constraints(scenario, ris, W)
        power = cls.total_power(scenario, ris, W)
        return TraceRecord(
            iteration=iteration,
            objective=power,
            total_power_w=power,
            weighted_objective=cls.weighted_power(scenario, ris, W, alpha),
            power_after_pair=after_pair,
            min_sinr_ratio=cls.min_sinr_ratio(scenario, ris, W, targets),
            bs_power_slack=report.bs_power_slack,
            ris_power_slack=report.ris_power_slack,
            min_element_slack=report.min_element_slack,
            newton_steps=counters["newton_steps"],
            manifold_iterations=counters["manifold_iterations"],
            pair_sweeps=counters["pair_sweeps"],
            timings=dict(timings),
        )

    @classmethod
    def run_power_min(
        cls,
        scenario: Scenario,
        targets: Optional[np.ndarray] = None,
        params: Optional[PowMinParams] = None,
        mode: Optional[Mode] = None,
        initial: Optional[Tuple[RisState, BeamformerSet]] = None,
    ) -> Tuple[RisState, BeamformerSet, SolveTrace]:
        params = params or PowMinParams()
        mode = Mode(mode or scenario.mode)
        targets = (
            scenario.sinr_targets if targets is None else np.asarray(targets, float)
        )
        trace = SolveTrace(problem="powmin", mode=mode.value)

        if not np.any(targets > 0.0):
            ris, _ = InitService.init_state(scenario, mode)
            ris = ris.replace(amp=np.zeros_like(ris.amp))
            W = BeamformerSet(np.zeros((scenario.n_antennas, scenario.n_users)))
            trace.append(
                cls._record(0, scenario, ris, W, targets, params.alpha, 0.0, Counter(), {})
            )
            trace.converged = True
            return ris, W, trace

        rank = cls.feasibility_precheck(scenario)
        if not rank.full_rank:
            logger.warning(
                "channel matrix has rank %d < %d; targets not guaranteed reachable",
                rank.rank,
                rank.required,
            )
            trace.message = f"rank {rank.rank} < {rank.required}"
            raise InfeasibleStart(
                f"channel matrix rank {rank.rank} is below the {rank.required} users",
                report=rank,
                trace=trace,
            )

        if initial is None:
            ris, W, doublings = cls.feasible_start(scenario, targets, params, mode)
            logger.debug("feasible start after %d power doublings", doublings)
        else:
            ris, W = initial
            if mode != Mode.OP:
                ris = ris.replace(
                    varsigma=InitService.initial_varsigma(ris.n_elements, mode)
                )

        power = cls.total_power(scenario, ris, W)
        trace.append(
            cls._record(0, scenario, ris, W, targets, params.alpha, power, Counter(), {})
        )
        for iteration in range(1, params.max_iter + 1):
            counters: Counter = Counter()
            timings = {}
            try:
                started = time.perf_counter()
                ris, W = cls.update_pair_min(scenario, ris, W, targets, params, counters)
                timings["beamformers_amplification"] = time.perf_counter() - started
                after_pair = cls.total_power(scenario, ris, W)

                started = time.perf_counter()
                phi_r, phi_t = cls.qos_balance_phases(
                    scenario, ris, W, targets, params, counters
                )
                ris = ris.replace(phi_r=phi_r, phi_t=phi_t)
                timings["phases"] = time.perf_counter() - started

                if mode == Mode.OP:
                    started = time.perf_counter()
                    ris = ris.replace(
                        varsigma=cls.update_varsigma_min(
                            scenario, ris, W, targets, params
                        )
                    )
                    timings["varsigma"] = time.perf_counter() - started
            except PowerMinInfeasible as exc:
                exc.trace, exc.state = trace, (ris, W)
                trace.message = str(exc)
                raise
            except (DegenerateRetractionError, NonFiniteObjectiveError) as exc:
                trace.message = str(exc)
                raise SubproblemFailure(str(exc), trace, (ris, W)) from exc

            new_power = cls.total_power(scenario, ris, W)
            trace.append(
                cls._record(
                    iteration,
                    scenario,
                    ris,
                    W,
                    targets,
                    params.alpha,
                    after_pair,
                    counters,
                    timings,
                )
            )
            change = abs(new_power - power) / max(power, 1e-300)
            logger.debug(
                "power-min iteration %d: %.6e W (change %.2e)",
                iteration,
                new_power,
                change,
            )
            power = new_power
            if change < params.rel_tol:
                trace.converged = True
                break

        logger.info(
            "power-min %s: %.6e W after %d iterations (converged=%s)",
            mode.value,
            power,
            trace.iterations,
            trace.converged,
        )
        return ris, W, trace
