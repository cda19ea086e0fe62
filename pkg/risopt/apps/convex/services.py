import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
from convex.entities import QcqpProblem, QcqpSolution, QcqpStatus
from django.conf import settings

logger = logging.getLogger(__name__)

ARMIJO_ALPHA = 0.25
BACKTRACK_BETA = 0.5
BARRIER_GROWTH = 10.0
MIN_STEP = 1e-16
CENTERING_DECREMENT = 1e-11
ACTIVE_SLACK = 1e-4


def _scale_of(*arrays) -> float:
    scale = max((float(np.max(np.abs(item), initial=0.0)) for item in arrays), default=0.0)
    return scale if scale > 0.0 else 1.0


class _Barrier:
    """Row-normalized problem data plus the log-barrier oracle."""

    def __init__(self, P, q, Cs, ls, bs, cones, obj_scale=1.0, row_scales=None):
        self.P = P
        self.q = q
        self.Cs = Cs
        self.ls = ls
        self.bs = bs
        self.cones = cones
        self.obj_scale = obj_scale
        self.row_scales = (
            np.ones(len(bs) + len(cones)) if row_scales is None else row_scales
        )

    @classmethod
    def from_problem(cls, problem: QcqpProblem) -> "_Barrier":
        n = problem.n
        obj_scale = _scale_of(problem.P, problem.q)
        scales = []
        Cs, ls, bs = [], [], []
        for item in problem.quadratic:
            scale = _scale_of(item.C, item.l, item.b)
            scales.append(scale)
            Cs.append(np.asarray(item.C, dtype=float) / scale)
            ls.append(np.asarray(item.l, dtype=float) / scale)
            bs.append(float(item.b) / scale)
        cones = []
        for item in problem.cones:
            scale = _scale_of(item.A, item.a, item.c, item.d)
            scales.append(scale)
            cones.append(
                (
                    np.asarray(item.A, dtype=float) / scale,
                    np.asarray(item.a, dtype=float) / scale,
                    np.asarray(item.c, dtype=float) / scale,
                    float(item.d) / scale,
                )
            )
        return cls(
            P=np.asarray(problem.P, dtype=float) / obj_scale,
            q=np.asarray(problem.q, dtype=float) / obj_scale,
            Cs=np.array(Cs).reshape(len(Cs), n, n),
            ls=np.array(ls).reshape(len(ls), n),
            bs=np.array(bs, dtype=float),
            cones=cones,
            obj_scale=obj_scale,
            row_scales=np.array(scales, dtype=float),
        )

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def n_constraints(self) -> int:
        return len(self.bs) + len(self.cones)

    @property
    def barrier_degree(self) -> int:
        return len(self.bs) + 2 * len(self.cones)

    def phase_one(self) -> "_Barrier":
        """minimize s s.t. f_i(z) <= s, ||A z + a|| <= c^T z + d + s, s >= -1."""
        n = self.n
        k = len(self.bs)
        Cs = np.zeros((k + 1, n + 1, n + 1))
        Cs[:k, :n, :n] = self.Cs
        ls = np.zeros((k + 1, n + 1))
        ls[:k, :n] = self.ls
        ls[:k, n] = 1.0
        ls[k, n] = 1.0
        bs = np.append(self.bs, 1.0)
        cones = [
            (np.hstack([A, np.zeros((A.shape[0], 1))]), a, np.append(c, 1.0), d)
            for A, a, c, d in self.cones
        ]
        q = np.zeros(n + 1)
        q[n] = -1.0
        return _Barrier(np.zeros((n + 1, n + 1)), q, Cs, ls, bs, cones)

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z - self.q @ z)

    def quad_terms(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        Cz = np.einsum("kij,j->ki", self.Cs, z)
        values = 0.5 * Cz @ z - self.ls @ z - self.bs
        return values, Cz - self.ls

    def cone_terms(self, z: np.ndarray):
        for A, a, c, d in self.cones:
            r = A @ z + a
            yield A, c, r, float(c @ z + d)

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        values, _ = self.quad_terms(z)
        cone_values = [np.linalg.norm(r) - s for _, _, r, s in self.cone_terms(z)]
        return np.concatenate([values, np.array(cone_values, dtype=float)])

    def constraint_gradients(self, z: np.ndarray) -> np.ndarray:
        _, grads = self.quad_terms(z)
        rows = [grads]
        for A, c, r, _ in self.cone_terms(z):
            norm = np.linalg.norm(r)
            rows.append(((A.T @ r) / norm - c if norm > 0 else -c)[None, :])
        return np.vstack(rows) if rows else np.zeros((0, self.n))

    def strictly_feasible(self, z: np.ndarray) -> bool:
        if not np.all(np.isfinite(z)):
            return False
        values, _ = self.quad_terms(z)
        if values.size and not np.all(values < 0.0):
            return False
        for _, _, r, s in self.cone_terms(z):
            if s <= 0.0 or s * s - r @ r <= 0.0:
                return False
        return True

    def merit(self, z: np.ndarray, t: float) -> float:
        if not self.strictly_feasible(z):
            return np.inf
        values, _ = self.quad_terms(z)
        total = t * self.objective(z) - np.sum(np.log(-values))
        for _, _, r, s in self.cone_terms(z):
            total -= np.log(s * s - r @ r)
        return float(total)

    def derivatives(self, z: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        gradient = t * (self.P @ z - self.q)
        hessian = t * self.P.copy()
        values, grads = self.quad_terms(z)
        if values.size:
            inverse = -1.0 / values
            gradient = gradient + grads.T @ inverse
            hessian = hessian + np.einsum("k,kij->ij", inverse, self.Cs)
            hessian = hessian + (grads.T * inverse**2) @ grads
        for A, c, r, s in self.cone_terms(z):
            u = s * s - r @ r
            grad_u = 2.0 * (s * c - A.T @ r)
            hess_u = 2.0 * (np.outer(c, c) - A.T @ A)
            gradient = gradient - grad_u / u
            hessian = hessian + np.outer(grad_u, grad_u) / u**2 - hess_u / u
        return gradient, hessian


class QcqpService:
    """Primal log-barrier interior-point solver for convex QCQP/SOCP problems."""

    @classmethod
    def solve_qcqp(
        cls,
        problem: QcqpProblem,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        x0: Optional[np.ndarray] = None,
    ) -> QcqpSolution:
        defaults = settings.RIS_OPTIM["QCQP"]
        tol = defaults["TOL"] if tol is None else tol
        max_iter = defaults["MAX_ITER"] if max_iter is None else max_iter
        problem.validate()

        barrier = _Barrier.from_problem(problem)
        z0 = None if x0 is None else problem.to_real(x0)
        budget = {"steps": 0, "max": max_iter}

        if barrier.n_constraints == 0:
            return cls._unconstrained(problem, barrier, tol)

        start, certificate, phase_status = cls._strict_start(barrier, z0, tol, budget)
        if start is None:
            z = np.zeros(problem.n) if z0 is None else z0
            logger.debug("qcqp infeasible: %s", certificate)
            return QcqpSolution(
                x=problem.from_real(z),
                objective=problem.objective(z),
                kkt_residual=np.inf,
                status=phase_status,
                duals=np.zeros(barrier.n_constraints),
                newton_steps=budget["steps"],
                certificate=certificate,
            )

        z, history, reached = cls._barrier_method(barrier, start, tol * 1e-2, budget)
        kkt, duals = cls._kkt(barrier, z)
        status = QcqpStatus.OPTIMAL if reached and kkt <= tol else QcqpStatus.MAX_ITER
        if status != QcqpStatus.OPTIMAL:
            logger.debug(
                "qcqp stopped without certificate: gap reached=%s kkt=%.3e steps=%d",
                reached,
                kkt,
                budget["steps"],
            )
        return QcqpSolution(
            x=problem.from_real(z),
            objective=problem.objective(z),
            kkt_residual=kkt,
            status=status,
            duals=duals * barrier.obj_scale / barrier.row_scales,
            newton_steps=budget["steps"],
            merit_history=history,
        )

    @classmethod
    def _unconstrained(
        cls, problem: QcqpProblem, barrier: _Barrier, tol: float
    ) -> QcqpSolution:
        z = scipy.linalg.lstsq(barrier.P, barrier.q)[0]
        residual = float(np.linalg.norm(barrier.P @ z - barrier.q))
        return QcqpSolution(
            x=problem.from_real(z),
            objective=problem.objective(z),
            kkt_residual=residual,
            status=QcqpStatus.OPTIMAL if residual <= tol else QcqpStatus.MAX_ITER,
            duals=np.zeros(0),
            newton_steps=1,
            certificate="" if residual <= tol else "objective unbounded below",
        )

    @classmethod
    def _strict_start(cls, barrier: _Barrier, z0, tol: float, budget):
        candidates = [z0] if z0 is not None else []
        candidates.append(np.zeros(barrier.n))
        for candidate in candidates:
            if barrier.strictly_feasible(candidate):
                return candidate, "", None

        z_start = candidates[0]
        violation = max(float(np.max(barrier.constraint_values(z_start))), 0.0)
        phase = barrier.phase_one()
        w0 = np.append(z_start, violation + 1.0)
        w, _, reached = cls._barrier_method(
            phase, w0, tol * 1e-2, budget, stop_when=lambda w: w[-1] < 0.0
        )
        if w[-1] < 0.0 and barrier.strictly_feasible(w[:-1]):
            return w[:-1], "", None

        values = barrier.constraint_values(w[:-1])
        worst = np.argsort(values)[::-1][: min(3, values.size)]
        certificate = (
            "phase-I found no interior point; min max-violation "
            f"{w[-1]:.3e}, most violated constraints {worst.tolist()}"
        )
        status = QcqpStatus.INFEASIBLE if reached else QcqpStatus.MAX_ITER
        return None, certificate, status

    @classmethod
    def _barrier_method(
        cls,
        barrier: _Barrier,
        z: np.ndarray,
        gap: float,
        budget,
        stop_when: Optional[Callable[[np.ndarray], bool]] = None,
    ) -> Tuple[np.ndarray, List[List[float]], bool]:
        t = 1.0
        history: List[List[float]] = []
        while True:
            z, stage = cls._center(barrier, z, t, budget, stop_when)
            history.append(stage)
            if stop_when is not None and stop_when(z):
                return z, history, True
            if barrier.barrier_degree / t <= gap:
                return z, history, True
            if budget["steps"] >= budget["max"]:
                return z, history, False
            t *= BARRIER_GROWTH

    @classmethod
    def _center(cls, barrier: _Barrier, z, t, budget, stop_when):
        merit = barrier.merit(z, t)
        stage = [merit]
        while budget["steps"] < budget["max"]:
            gradient, hessian = barrier.derivatives(z, t)
            direction = cls._newton_direction(hessian, gradient)
            slope = float(gradient @ direction)
            if not slope < 0.0 or -slope / 2.0 <= CENTERING_DECREMENT:
                break

            step = 1.0
            while step >= MIN_STEP and not barrier.strictly_feasible(z + step * direction):
                step *= BACKTRACK_BETA
            candidate_merit = np.inf
            while step >= MIN_STEP:
                candidate_merit = barrier.merit(z + step * direction, t)
                if candidate_merit <= merit + ARMIJO_ALPHA * step * slope:
                    break
                step *= BACKTRACK_BETA
            if step < MIN_STEP or not candidate_merit < merit:
                break

            z = z + step * direction
            merit = candidate_merit
            stage.append(merit)
            budget["steps"] += 1
            if stop_when is not None and stop_when(z):
                break
        return z, stage

    @classmethod
    def _newton_direction(cls, hessian: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        try:
            factor = scipy.linalg.cho_factor(hessian, check_finite=False)
            direction = scipy.linalg.cho_solve(factor, -gradient, check_finite=False)
            if np.all(np.isfinite(direction)):
                return direction
        except (np.linalg.LinAlgError, ValueError):
            pass
        return scipy.linalg.lstsq(hessian, -gradient)[0]

    @classmethod
    def _kkt(cls, barrier: _Barrier, z: np.ndarray) -> Tuple[float, np.ndarray]:
        """Rebuild nonnegative multipliers on the near-active set by NNLS and
        report max(stationarity, complementarity, primal violation)."""
        values = barrier.constraint_values(z)
        stationary = barrier.P @ z - barrier.q
        duals = np.zeros(values.size)
        active = values >= -ACTIVE_SLACK
        if np.any(active):
            grads = barrier.constraint_gradients(z)[active]
            multipliers, residual = scipy.optimize.nnls(grads.T, -stationary)
            duals[active] = multipliers
        else:
            residual = float(np.linalg.norm(stationary))
        complementarity = float(np.max(duals * np.abs(values), initial=0.0))
        violation = float(np.max(values, initial=0.0))
        return max(float(residual), complementarity, max(violation, 0.0)), duals
