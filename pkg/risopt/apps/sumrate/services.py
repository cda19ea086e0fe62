import logging
import math
import time
from collections import Counter
from typing import Optional, Tuple

import numpy as np
import scipy.optimize
from convex.entities import QcqpProblem, QcqpStatus, QuadraticConstraint
from convex.services import QcqpService
from downlink.entities import BeamformerSet, RisState, SolveTrace, TraceRecord
from downlink.services import DownlinkService, InitService
from manifold.exceptions import DegenerateRetractionError, NonFiniteObjectiveError
from manifold.services import CircleManifold
from scenarios.entities import Mode, Scenario
from sumrate.entities import AuxState, SumRateParams, VarsigmaCoefficients
from sumrate.exceptions import SubproblemFailure

logger = logging.getLogger(__name__)

IMPROVEMENT_SLACK = 1e-12
VARSIGMA_SCAN = 401


def _worse(new: float, old: float) -> bool:
    return new < old - IMPROVEMENT_SLACK * (1.0 + abs(old))


class SumRateService:
    """Block-coordinate ascent on the fractional-programming surrogate.

    In natural-log units the surrogate is h(gamma) + g(...), where
    h = sum ln(1 + gamma_k) - sum gamma_k; at the closed-form auxiliaries
    it equals ln 2 times the sum-rate in bit/s/Hz.
    """

    # ------------------------------------------------------------ surrogate

    @classmethod
    def _received(cls, scenario: Scenario, ris: RisState, W: BeamformerSet):
        Z = DownlinkService.received(scenario, ris, W)
        noise = DownlinkService.noise(scenario, ris)
        total = np.sum(np.abs(Z) ** 2, axis=1) + noise
        return Z, noise, total

    @classmethod
    def h_value(cls, gamma: np.ndarray) -> float:
        return float(np.sum(np.log1p(gamma)) - np.sum(gamma))

    @classmethod
    def surrogate_g(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, aux: AuxState
    ) -> float:
        Z, _, total = cls._received(scenario, ris, W)
        signal = np.real(aux.tau.conj() * np.diag(Z))
        return float(
            np.sum(
                2.0 * np.sqrt(1.0 + aux.gamma) * signal - np.abs(aux.tau) ** 2 * total
            )
        )

    @classmethod
    def fp_objective(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, aux: AuxState
    ) -> float:
        """(h + g) / ln 2, comparable with the sum-rate in bit/s/Hz."""
        return (cls.h_value(aux.gamma) + cls.surrogate_g(scenario, ris, W, aux)) / math.log(
            2.0
        )

    @classmethod
    def lagrangian_dual_objective(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, gamma: np.ndarray
    ) -> float:
        """sum ln(1+gamma) - sum gamma + sum (1+gamma_k) |h~_k^H w_k|^2 / D_k."""
        Z, _, total = cls._received(scenario, ris, W)
        ratio = np.abs(np.diag(Z)) ** 2 / total
        return cls.h_value(gamma) + float(np.sum((1.0 + gamma) * ratio))

    @classmethod
    def update_gamma(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet
    ) -> np.ndarray:
        return DownlinkService.sinrs(scenario, ris, W)

    @classmethod
    def update_tau(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, gamma: np.ndarray
    ) -> np.ndarray:
        Z, _, total = cls._received(scenario, ris, W)
        return np.sqrt(1.0 + gamma) * np.diag(Z) / total

    @classmethod
    def refresh_aux(cls, scenario: Scenario, ris: RisState, W: BeamformerSet) -> AuxState:
        gamma = cls.update_gamma(scenario, ris, W)
        return AuxState(gamma=gamma, tau=cls.update_tau(scenario, ris, W, gamma))

    # ---------------------------------------------------------- beamformers

    @classmethod
    def beamformer_problem(
        cls, scenario: Scenario, ris: RisState, aux: AuxState
    ) -> Tuple[QcqpProblem, float]:
        """-g as a QCQP in y = vec(W) / sqrt(P_T); returns (problem, scale)."""
        n, k_total = scenario.n_antennas, scenario.n_users
        rows = DownlinkService.effective_rows(scenario, ris)
        noise = DownlinkService.noise(scenario, ris)
        weights = np.abs(aux.tau) ** 2
        psi = rows.conj().T @ (weights[:, None] * rows)
        linear = (np.sqrt(1.0 + aux.gamma) * aux.tau)[:, None] * rows.conj()

        scale = math.sqrt(scenario.budget_bs)
        eye_users = np.eye(k_total)
        P = 2.0 * np.kron(eye_users, psi) * scale**2
        q = 2.0 * linear.reshape(-1) * scale

        G = scenario.G
        constraints = [
            QuadraticConstraint(
                2.0 * np.eye(n * k_total) * scale**2,
                np.zeros(n * k_total),
                scenario.budget_bs,
                "bs_power",
            ),
            QuadraticConstraint(
                2.0 * np.kron(eye_users, G.conj().T @ (ris.amp[:, None] * G)) * scale**2,
                np.zeros(n * k_total),
                scenario.budget_ris - scenario.noise_ris * float(np.sum(ris.amp)),
                "ris_power",
            ),
        ]
        for m in np.flatnonzero(ris.amp > 0.0):
            gram = np.outer(G[m].conj(), G[m])
            constraints.append(
                QuadraticConstraint(
                    2.0 * ris.amp[m] * np.kron(eye_users, gram) * scale**2,
                    np.zeros(n * k_total),
                    scenario.budget_element[m] - ris.amp[m] * scenario.noise_ris,
                    f"element_power[{m}]",
                )
            )
        constant = float(np.sum(weights * noise))
        return QcqpProblem.from_complex(P, q, constant, constraints), scale

    @classmethod
    def update_beamformers(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        params: Optional[SumRateParams] = None,
        counters: Optional[Counter] = None,
    ) -> BeamformerSet:
        params = params or SumRateParams()
        problem, scale = cls.beamformer_problem(scenario, ris, aux)
        solution = QcqpService.solve_qcqp(
            problem,
            tol=params.qcqp_tol,
            max_iter=params.qcqp_max_iter,
            x0=W.vec() / scale,
        )
        if counters is not None:
            counters["newton_steps"] += solution.newton_steps
        if solution.status == QcqpStatus.INFEASIBLE:
            raise SubproblemFailure(
                f"beamformer subproblem infeasible: {solution.certificate}"
            )

        candidate = BeamformerSet.from_vec(solution.x * scale, scenario.n_users)
        old = cls.surrogate_g(scenario, ris, W, aux)
        new = cls.surrogate_g(scenario, ris, candidate, aux)
        if _worse(new, old):
            logger.debug("beamformer update rejected: g %.6e -> %.6e", old, new)
            return W
        return candidate

    # -------------------------------------------------------- amplification

    @classmethod
    def _cascade_terms(cls, scenario: Scenario, ris: RisState, W: BeamformerSet):
        """Direct amplitudes d[k, j] and per-element coefficients
        U[k, j, m] = conj(h_r[k, m]) phi_km (G w_j)_m (no amplitude split)."""
        direct = scenario.h_d.conj() @ W.w
        incident = scenario.G @ W.w
        phases = DownlinkService.side_phases(scenario, ris)
        U = (scenario.h_r.conj() * phases)[:, None, :] * incident.T[None, :, :]
        return direct, U, incident

    @classmethod
    def amplification_problem(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, aux: AuxState
    ) -> Tuple[QcqpProblem, float]:
        """-g over x = sqrt(a) / scale with the RIS, per-element and sign
        constraints."""
        direct, U, incident = cls._cascade_terms(scenario, ris, W)
        split = DownlinkService.side_amplitudes(scenario, ris)
        V = U * split[:, None, :]
        weights = np.abs(aux.tau) ** 2
        root = np.sqrt(1.0 + aux.gamma)

        Q = np.real(np.einsum("k,kjm,kjn->mn", weights, V.conj(), V))
        Q += scenario.noise_ris * np.diag(
            np.sum(weights[:, None] * np.abs(scenario.h_r) ** 2 * split**2, axis=0)
        )
        diagonal = np.arange(scenario.n_users)
        p = np.real(root[:, None] * aux.tau.conj()[:, None] * V[diagonal, diagonal]).sum(
            axis=0
        ) - np.real(np.einsum("k,kj,kjm->m", weights, direct.conj(), V))
        constant = float(
            np.sum(
                2.0 * root * np.real(aux.tau.conj() * np.diag(direct))
                - weights
                * (np.sum(np.abs(direct) ** 2, axis=1) + scenario.noise_user)
            )
        )

        rho = np.sum(np.abs(incident) ** 2, axis=1) + scenario.noise_ris
        cap = scenario.budget_element / rho
        scale = float(np.sqrt(np.max(cap)))
        m_total = scenario.n_elements
        eye = np.eye(m_total)
        constraints = [
            QuadraticConstraint(
                2.0 * np.diag(rho) * scale**2,
                np.zeros(m_total),
                scenario.budget_ris,
                "ris_power",
            )
        ]
        for m in range(m_total):
            constraints.append(
                QuadraticConstraint(
                    2.0 * np.outer(eye[m], eye[m]) * scale**2,
                    np.zeros(m_total),
                    cap[m],
                    f"element_power[{m}]",
                )
            )
            constraints.append(
                QuadraticConstraint(
                    np.zeros((m_total, m_total)), eye[m] * scale, 0.0, f"sign[{m}]"
                )
            )
        problem = QcqpProblem.real(
            2.0 * Q * scale**2, 2.0 * p * scale, -constant, constraints
        )
        return problem, scale

    @classmethod
    def update_amplification(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        params: Optional[SumRateParams] = None,
        counters: Optional[Counter] = None,
    ) -> np.ndarray:
        params = params or SumRateParams()
        problem, scale = cls.amplification_problem(scenario, ris, W, aux)
        solution = QcqpService.solve_qcqp(
            problem,
            tol=params.qcqp_tol,
            max_iter=params.qcqp_max_iter,
            x0=np.sqrt(ris.amp) / scale,
        )
        if counters is not None:
            counters["newton_steps"] += solution.newton_steps
        if solution.status == QcqpStatus.INFEASIBLE:
            raise SubproblemFailure(
                f"amplification subproblem infeasible: {solution.certificate}"
            )

        cap = InitService.amplification_cap(scenario, W, use_ris_budget=False)
        amp = np.minimum((np.clip(solution.x, 0.0, None) * scale) ** 2, cap)
        old = cls.surrogate_g(scenario, ris, W, aux)
        new = cls.surrogate_g(scenario, ris.replace(amp=amp), W, aux)
        if _worse(new, old):
            logger.debug("amplification update rejected: g %.6e -> %.6e", old, new)
            return ris.amp
        return amp

    @classmethod
    def update_pair(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        params: Optional[SumRateParams] = None,
        counters: Optional[Counter] = None,
    ) -> Tuple[RisState, BeamformerSet]:
        """Alternate the beamformer and amplification blocks at fixed
        auxiliaries until the surrogate stops improving.

        The two blocks share the per-element power constraints, so a single
        pass leaves both sitting on each other's boundary.
        """
        params = params or SumRateParams()
        value = cls.surrogate_g(scenario, ris, W, aux)
        sweeps = 0
        for sweeps in range(1, params.pair_max_sweeps + 1):
            W = cls.update_beamformers(scenario, ris, W, aux, params, counters)
            ris = ris.replace(
                amp=cls.update_amplification(scenario, ris, W, aux, params, counters)
            )
            updated = cls.surrogate_g(scenario, ris, W, aux)
            gain = (updated - value) / max(abs(value), 1e-12)
            value = updated
            if gain < params.pair_tol:
                break
        if counters is not None:
            counters["pair_sweeps"] += sweeps
        return ris, W

    # --------------------------------------------------------------- phases

    @classmethod
    def build_phase_quadratic(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        side: str,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(B, c) with g = -(phi^H B phi - 2 Re{phi^H c}) + const on one side."""
        m_total = scenario.n_elements
        users = np.array(scenario.side_users(side), dtype=int)
        if users.size == 0:
            return np.zeros((m_total, m_total), dtype=complex), np.zeros(
                m_total, dtype=complex
            )
        direct = scenario.h_d.conj() @ W.w
        incident = scenario.G @ W.w
        split = DownlinkService.side_amplitudes(scenario, ris)
        coeff = scenario.h_r.conj() * split * np.sqrt(ris.amp)[None, :]
        u = coeff[users][:, None, :] * incident.T[None, :, :]

        weights = np.abs(aux.tau[users]) ** 2
        B = np.einsum("k,kjm,kjn->mn", weights, u.conj(), u)
        own = u[np.arange(users.size), users]
        c = np.sum(
            (np.sqrt(1.0 + aux.gamma[users]) * aux.tau[users])[:, None] * own.conj(),
            axis=0,
        ) - np.einsum("k,kj,kjm->m", weights, direct[users], u.conj())
        return 0.5 * (B + B.conj().T), c

    @classmethod
    def build_phase_quadratic_r(cls, scenario, ris, W, aux):
        return cls.build_phase_quadratic(scenario, ris, W, aux, "r")

    @classmethod
    def build_phase_quadratic_t(cls, scenario, ris, W, aux):
        return cls.build_phase_quadratic(scenario, ris, W, aux, "t")

    @classmethod
    def update_phases(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        params: Optional[SumRateParams] = None,
        counters: Optional[Counter] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        params = params or SumRateParams()
        phases = {"r": ris.phi_r, "t": ris.phi_t}
        for side in ("r", "t"):
            if not scenario.side_users(side):
                continue
            B, c = cls.build_phase_quadratic(scenario, ris, W, aux, side)
            current = phases[side]
            point, trace = CircleManifold.minimize_quadratic(
                B, c, current, params.manifold
            )
            if counters is not None:
                counters["manifold_iterations"] += trace.iterations
            before = CircleManifold.quadratic_value(B, c, current)
            after = CircleManifold.quadratic_value(B, c, point.phi)
            if after <= before + IMPROVEMENT_SLACK * (1.0 + abs(before)):
                phases[side] = point.phi
        return phases["r"], phases["t"]

    # ------------------------------------------------------ amplitude split

    @classmethod
    def varsigma_coefficients(
        cls, scenario: Scenario, ris: RisState, W: BeamformerSet, aux: AuxState
    ) -> VarsigmaCoefficients:
        direct, U, _ = cls._cascade_terms(scenario, ris, W)
        U = U * np.sqrt(ris.amp)[None, None, :]
        weights = np.abs(aux.tau) ** 2
        root = np.sqrt(1.0 + aux.gamma)
        k_total, m_total = scenario.n_users, scenario.n_elements
        diagonal = np.arange(k_total)

        Q_users = np.real(np.einsum("k,kjm,kjn->kmn", weights, U.conj(), U))
        noise_diag = (
            scenario.noise_ris
            * weights[:, None]
            * np.abs(scenario.h_r) ** 2
            * ris.amp[None, :]
        )
        Q_users[:, np.arange(m_total), np.arange(m_total)] += noise_diag
        b_users = np.real(
            (root * aux.tau.conj())[:, None] * U[diagonal, diagonal]
        ) - np.real(np.einsum("k,kj,kjm->km", weights, direct.conj(), U))

        reflect = scenario.reflect_mask
        return VarsigmaCoefficients(
            Q_r=Q_users[reflect].sum(axis=0),
            Q_t=Q_users[~reflect].sum(axis=0),
            b_r=b_users[reflect].sum(axis=0),
            b_t=b_users[~reflect].sum(axis=0),
        )

    @classmethod
    def varsigma_objective(
        cls, coefficients: VarsigmaCoefficients, varsigma: np.ndarray
    ) -> float:
        s = np.asarray(varsigma, dtype=float)
        t = np.sqrt(np.clip(1.0 - s**2, 0.0, None))
        return float(
            s @ coefficients.Q_r @ s
            - 2.0 * coefficients.b_r @ s
            + t @ coefficients.Q_t @ t
            - 2.0 * coefficients.b_t @ t
        )

    @classmethod
    def _element_terms(cls, coefficients: VarsigmaCoefficients, varsigma, m: int):
        s = varsigma
        t = np.sqrt(np.clip(1.0 - s**2, 0.0, None))
        A = coefficients.Q_r[m, m]
        C = coefficients.Q_t[m, m]
        r = coefficients.Q_r[m] @ s - A * s[m] - coefficients.b_r[m]
        u = coefficients.Q_t[m] @ t - C * t[m] - coefficients.b_t[m]
        return A, C, r, u

    @classmethod
    def varsigma_element_update(
        cls,
        coefficients: VarsigmaCoefficients,
        varsigma: np.ndarray,
        m: int,
        delta: float = 1e-6,
    ) -> float:
        """Exact minimizer of the objective over element m, others fixed.

        F_m(s) = A s^2 + 2 r s + C (1 - s^2) + 2 u sqrt(1 - s^2) + const.
        The endpoint-derivative cases decide first; a derivative scan adds
        any interior stationary points they cannot see, and the smallest
        objective wins.
        """
        A, C, r, u = cls._element_terms(coefficients, varsigma, m)

        def value(s):
            return A * s * s + 2.0 * r * s + C * (1.0 - s * s) + 2.0 * u * math.sqrt(
                max(1.0 - s * s, 0.0)
            )

        def slope(s):
            return (A - C) * s + r - u * s / np.sqrt(1.0 - s * s)

        upper = 1.0 - delta
        at_zero, at_upper = slope(0.0), slope(upper)
        if at_zero >= 0.0 and at_upper >= 0.0:
            best = 0.0
        elif at_zero <= 0.0 and at_upper <= 0.0:
            best = 1.0
        elif at_zero < 0.0 < at_upper:
            best = scipy.optimize.bisect(slope, 0.0, upper, xtol=1e-15, maxiter=200)
        else:
            best = 0.0 if value(0.0) <= value(1.0) else 1.0

        grid = np.unique(
            np.concatenate(
                [np.linspace(0.0, upper, VARSIGMA_SCAN), 1.0 - np.geomspace(delta, 1.0, 200)]
            )
        )
        grid = grid[(grid >= 0.0) & (grid <= upper)]
        slopes = slope(grid)
        candidates = [0.0, 1.0, float(varsigma[m])]
        candidates += grid[slopes == 0.0].tolist()
        for index in np.flatnonzero(np.sign(slopes[:-1]) * np.sign(slopes[1:]) < 0):
            candidates.append(
                scipy.optimize.bisect(
                    slope, grid[index], grid[index + 1], xtol=1e-15, maxiter=200
                )
            )
        best_value = value(best)
        for candidate in candidates:
            candidate_value = value(candidate)
            if candidate_value < best_value - 1e-15 * (1.0 + abs(best_value)):
                best, best_value = float(candidate), candidate_value
        return float(min(max(best, 0.0), 1.0))

    @classmethod
    def solve_varsigma(
        cls,
        coefficients: VarsigmaCoefficients,
        varsigma0: np.ndarray,
        delta: float = 1e-6,
        tol: float = 1e-6,
        max_sweeps: int = 50,
    ) -> Tuple[np.ndarray, int]:
        varsigma = np.array(varsigma0, dtype=float, copy=True)
        objective = cls.varsigma_objective(coefficients, varsigma)
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            for m in range(varsigma.size):
                varsigma[m] = cls.varsigma_element_update(coefficients, varsigma, m, delta)
            updated = cls.varsigma_objective(coefficients, varsigma)
            change = abs(updated - objective) / max(abs(objective), 1e-300)
            objective = updated
            if change < tol:
                break
        return varsigma, sweeps

    @classmethod
    def update_varsigma(
        cls,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        aux: AuxState,
        params: Optional[SumRateParams] = None,
    ) -> np.ndarray:
        params = params or SumRateParams()
        coefficients = cls.varsigma_coefficients(scenario, ris, W, aux)
        varsigma, sweeps = cls.solve_varsigma(
            coefficients,
            ris.varsigma,
            params.delta,
            params.varsigma_tol,
            params.varsigma_max_sweeps,
        )
        logger.debug("amplitude split converged in %d sweeps", sweeps)
        old = cls.surrogate_g(scenario, ris, W, aux)
        new = cls.surrogate_g(scenario, ris.replace(varsigma=varsigma), W, aux)
        if _worse(new, old):
            logger.debug("amplitude split rejected: g %.6e -> %.6e", old, new)
            return ris.varsigma
        return varsigma

    # ------------------------------------------------------------ outer loop

    @classmethod
    def _record(
        cls,
        iteration: int,
        scenario: Scenario,
        ris: RisState,
        W: BeamformerSet,
        rate: float,
        surrogate: float,
        counters: Counter,
        timings,
    ) -> TraceRecord:
        report = DownlinkService.check_constraints(scenario, ris, W)
        return TraceRecord(
            iteration=iteration,
            objective=rate,
            surrogate=surrogate,
            bs_power_slack=report.bs_power_slack,
            ris_power_slack=report.ris_power_slack,
            min_element_slack=report.min_element_slack,
            newton_steps=counters["newton_steps"],
            manifold_iterations=counters["manifold_iterations"],
            pair_sweeps=counters["pair_sweeps"],
            timings=dict(timings),
        )

    @classmethod
    def run_sum_rate(
        cls,
        scenario: Scenario,
        params: Optional[SumRateParams] = None,
        mode: Optional[Mode] = None,
        initial: Optional[Tuple[RisState, BeamformerSet]] = None,
    ) -> Tuple[RisState, BeamformerSet, SolveTrace]:
        params = params or SumRateParams()
        mode = Mode(mode or scenario.mode)
        if initial is None:
            ris, W = InitService.init_state(scenario, mode)
        else:
            ris, W = initial
            ris = ris.replace(varsigma=cls._mode_varsigma(ris, mode))

        trace = SolveTrace(problem="sumrate", mode=mode.value)
        aux = cls.refresh_aux(scenario, ris, W)
        rate = DownlinkService.sum_rate(scenario, ris, W)
        trace.append(cls._record(0, scenario, ris, W, rate, rate, Counter(), {}))

        for iteration in range(1, params.max_iter + 1):
            counters: Counter = Counter()
            timings = {}
            try:
                started = time.perf_counter()
                ris, W = cls.update_pair(scenario, ris, W, aux, params, counters)
                timings["beamformers_amplification"] = time.perf_counter() - started

                started = time.perf_counter()
                phi_r, phi_t = cls.update_phases(scenario, ris, W, aux, params, counters)
                ris = ris.replace(phi_r=phi_r, phi_t=phi_t)
                timings["phases"] = time.perf_counter() - started

                if mode == Mode.OP:
                    started = time.perf_counter()
                    ris = ris.replace(
                        varsigma=cls.update_varsigma(scenario, ris, W, aux, params)
                    )
                    timings["varsigma"] = time.perf_counter() - started
            except SubproblemFailure as exc:
                exc.trace, exc.state = trace, (ris, W)
                trace.message = str(exc)
                raise
            except (DegenerateRetractionError, NonFiniteObjectiveError) as exc:
                trace.message = str(exc)
                raise SubproblemFailure(str(exc), trace, (ris, W)) from exc

            surrogate = cls.fp_objective(scenario, ris, W, aux)
            aux = cls.refresh_aux(scenario, ris, W)
            new_rate = DownlinkService.sum_rate(scenario, ris, W)
            trace.append(
                cls._record(
                    iteration, scenario, ris, W, new_rate, surrogate, counters, timings
                )
            )
            change = abs(new_rate - rate) / max(abs(rate), 1e-12)
            logger.debug(
                "sum-rate iteration %d: %.6f bit/s/Hz (change %.2e)",
                iteration,
                new_rate,
                change,
            )
            rate = new_rate
            if change < params.rel_tol:
                trace.converged = True
                break

        logger.info(
            "sum-rate %s: %.4f bit/s/Hz after %d iterations (converged=%s)",
            mode.value,
            rate,
            trace.iterations,
            trace.converged,
        )
        return ris, W, trace

    @classmethod
    def _mode_varsigma(cls, ris: RisState, mode: Mode) -> np.ndarray:
        if mode == Mode.OP:
            return ris.varsigma
        return InitService.initial_varsigma(ris.n_elements, mode)
