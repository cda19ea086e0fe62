import logging
from typing import Callable, Optional, Tuple

import numpy as np
from manifold.entities import CirclePoint, ManifoldParams, ManifoldTrace
from manifold.exceptions import DegenerateRetractionError, NonFiniteObjectiveError

logger = logging.getLogger(__name__)

RETRACTION_FLOOR = 1e-14
QUADRATIC_STEP_EPS = 1e-12

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


class CircleManifold:
    """Riemannian descent on {phi in C^M : |phi_m| = 1}.

    Gradient callbacks return the Euclidean gradient 2 df/d(conj phi), i.e.
    the real gradient of f over (Re phi, Im phi) packed as a complex vector.
    """

    @classmethod
    def euclidean_grad_quadratic(
        cls, B: np.ndarray, c: np.ndarray, phi: np.ndarray
    ) -> np.ndarray:
        """Descent direction -2 B phi + 2 c of phi^H B phi - 2 Re{phi^H c}."""
        return -2.0 * (B @ phi) + 2.0 * c

    @classmethod
    def quadratic_value(cls, B: np.ndarray, c: np.ndarray, phi: np.ndarray) -> float:
        return float(np.real(phi.conj() @ B @ phi) - 2.0 * np.real(phi.conj() @ c))

    @classmethod
    def project_tangent(cls, g: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return g - np.real(g * phi.conj()) * phi

    @classmethod
    def retract(
        cls, phi_bar: np.ndarray, previous: Optional[np.ndarray] = None
    ) -> CirclePoint:
        phi_bar = np.asarray(phi_bar, dtype=complex)
        modulus = np.abs(phi_bar)
        degenerate = modulus < RETRACTION_FLOOR
        if np.any(degenerate):
            if previous is None:
                raise DegenerateRetractionError(np.flatnonzero(degenerate))
            result = np.where(
                degenerate, previous, phi_bar / np.where(degenerate, 1.0, modulus)
            )
            return CirclePoint(result)
        return CirclePoint(phi_bar / modulus)

    @classmethod
    def minimize_on_circles(
        cls,
        objective: Objective,
        gradient: Gradient,
        phi0: np.ndarray,
        params: Optional[ManifoldParams] = None,
        initial_step: Optional[float] = None,
    ) -> Tuple[CirclePoint, ManifoldTrace]:
        params = params or ManifoldParams()
        base_step = params.initial_step or initial_step or 1.0

        phi = CirclePoint(phi0).phi
        value = objective(phi)
        if not np.isfinite(value):
            raise NonFiniteObjectiveError(0, phi, value)
        trace = ManifoldTrace(values=[float(value)])

        for iteration in range(1, params.max_iter + 1):
            egrad = gradient(phi)
            if not np.all(np.isfinite(egrad)):
                raise NonFiniteObjectiveError(iteration, phi)
            rgrad = cls.project_tangent(egrad, phi)
            grad_norm2 = float(np.real(np.vdot(rgrad, rgrad)))
            if np.sqrt(grad_norm2) <= params.grad_tol or grad_norm2 == 0.0:
                trace.converged, trace.reason = True, "gradient"
                break

            # backtracking restarts from the base step every iteration
            step = base_step
            while True:
                candidate = cls.retract(phi - step * rgrad, previous=phi).phi
                candidate_value = objective(candidate)
                if not np.isfinite(candidate_value):
                    raise NonFiniteObjectiveError(iteration, candidate, candidate_value)
                if candidate_value <= value - params.sufficient_decrease * step * grad_norm2:
                    break
                step *= params.shrink
                if step < params.min_step:
                    break
            if step < params.min_step:
                trace.converged, trace.reason = True, "line search stalled"
                break

            change = abs(candidate_value - value) / (1.0 + abs(candidate_value))
            phi, value = candidate, candidate_value
            trace.values.append(float(value))
            trace.steps.append(step)
            if change <= params.rel_tol:
                trace.converged, trace.reason = True, "relative change"
                break
        else:
            trace.reason = "max_iter"

        logger.debug(
            "manifold descent: %d iterations, f=%.6e (%s)",
            trace.iterations,
            value,
            trace.reason,
        )
        return CirclePoint(phi), trace

    @classmethod
    def minimize_quadratic(
        cls,
        B: np.ndarray,
        c: np.ndarray,
        phi0: np.ndarray,
        params: Optional[ManifoldParams] = None,
    ) -> Tuple[CirclePoint, ManifoldTrace]:
        """Minimize phi^H B phi - 2 Re{phi^H c}; first step 1/(2||B||_F + eps)."""
        initial_step = 1.0 / (2.0 * np.linalg.norm(B) + QUADRATIC_STEP_EPS)
        return cls.minimize_on_circles(
            lambda phi: cls.quadratic_value(B, c, phi),
            lambda phi: -cls.euclidean_grad_quadratic(B, c, phi),
            phi0,
            params,
            initial_step=initial_step,
        )
