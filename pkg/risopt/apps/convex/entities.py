import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from convex.exceptions import QcqpUsageError


class QcqpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class QuadraticConstraint:
    """0.5 z^T C z - l^T z <= b over the real variable z."""

    C: np.ndarray
    l: np.ndarray
    b: float
    name: str = ""


@dataclass
class ConeConstraint:
    """||A z + a|| <= c^T z + d over the real variable z."""

    A: np.ndarray
    a: np.ndarray
    c: np.ndarray
    d: float
    name: str = ""


def realify_matrix(matrix: np.ndarray) -> np.ndarray:
    """[[Re, -Im], [Im, Re]]: the real map of z = [Re x; Im x]."""
    matrix = np.asarray(matrix, dtype=complex)
    return np.block([[matrix.real, -matrix.imag], [matrix.imag, matrix.real]])


def realify_vector(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=complex)
    return np.concatenate([vector.real, vector.imag])


def complexify(z: np.ndarray) -> np.ndarray:
    n = z.shape[0] // 2
    return z[:n] + 1j * z[n:]


@dataclass
class QcqpProblem:
    """minimize 0.5 z^T P z - q^T z + constant over real z.

    Complex problems (minimize 0.5 x^H P x - Re{q^H x}) are realified once
    by ``from_complex``; ``complex_dim`` remembers the mapping back.
    """

    P: np.ndarray
    q: np.ndarray
    constant: float = 0.0
    quadratic: List[QuadraticConstraint] = field(default_factory=list)
    cones: List[ConeConstraint] = field(default_factory=list)
    complex_dim: Optional[int] = None

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @classmethod
    def real(
        cls,
        P,
        q,
        constant: float = 0.0,
        quadratic: Sequence[QuadraticConstraint] = (),
        cones: Sequence[ConeConstraint] = (),
    ) -> "QcqpProblem":
        problem = cls(
            P=np.asarray(P, dtype=float),
            q=np.asarray(q, dtype=float),
            constant=float(constant),
            quadratic=list(quadratic),
            cones=list(cones),
        )
        problem.validate()
        return problem

    @classmethod
    def from_complex(
        cls,
        P,
        q,
        constant: float = 0.0,
        quadratic: Sequence[QuadraticConstraint] = (),
        cones: Sequence[ConeConstraint] = (),
    ) -> "QcqpProblem":
        """Complex data: constraint C, l and cone A, a, c are complex and read
        as 0.5 x^H C x - Re{l^H x} <= b and ||A x + a|| <= Re{c^H x} + d."""
        P = np.asarray(P, dtype=complex)
        q = np.asarray(q, dtype=complex)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or q.shape != (P.shape[0],):
            raise QcqpUsageError(
                f"objective shapes P{P.shape} and q{q.shape} do not agree"
            )
        problem = cls(
            P=realify_matrix(P),
            q=realify_vector(q),
            constant=float(constant),
            quadratic=[
                QuadraticConstraint(
                    realify_matrix(item.C), realify_vector(item.l), item.b, item.name
                )
                for item in quadratic
            ],
            cones=[
                ConeConstraint(
                    realify_matrix(item.A),
                    realify_vector(item.a),
                    realify_vector(item.c),
                    item.d,
                    item.name,
                )
                for item in cones
            ],
            complex_dim=P.shape[0],
        )
        problem.validate()
        return problem

    def validate(self) -> None:
        n = self.q.shape[0] if self.q.ndim == 1 else -1
        if self.P.shape != (n, n):
            raise QcqpUsageError(
                f"objective shapes P{self.P.shape} and q{self.q.shape} do not agree"
            )
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.q))):
            raise QcqpUsageError("objective data must be finite")
        if not np.allclose(self.P, self.P.T, atol=1e-9 * (1.0 + np.abs(self.P).max())):
            raise QcqpUsageError("objective matrix must be Hermitian")
        for index, item in enumerate(self.quadratic):
            label = item.name or f"quadratic[{index}]"
            if np.shape(item.C) != (n, n) or np.shape(item.l) != (n,):
                raise QcqpUsageError(
                    f"{label}: shapes C{np.shape(item.C)} l{np.shape(item.l)} != n={n}"
                )
            if not np.allclose(item.C, item.C.T, atol=1e-9 * (1.0 + np.abs(item.C).max())):
                raise QcqpUsageError(f"{label}: constraint matrix must be Hermitian")
            if not np.isfinite(item.b):
                raise QcqpUsageError(f"{label}: bound must be finite")
        for index, item in enumerate(self.cones):
            label = item.name or f"cone[{index}]"
            rows = np.shape(item.A)[0] if np.ndim(item.A) == 2 else -1
            if (
                np.shape(item.A) != (rows, n)
                or np.shape(item.a) != (rows,)
                or np.shape(item.c) != (n,)
            ):
                raise QcqpUsageError(
                    f"{label}: shapes A{np.shape(item.A)} a{np.shape(item.a)} "
                    f"c{np.shape(item.c)} inconsistent with n={n}"
                )

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z - self.q @ z + self.constant)

    def to_real(self, x: np.ndarray) -> np.ndarray:
        if self.complex_dim is None:
            return np.asarray(x, dtype=float)
        return realify_vector(x)

    def from_real(self, z: np.ndarray) -> np.ndarray:
        if self.complex_dim is None:
            return z
        return complexify(z)


@dataclass(frozen=True)
class QcqpSolution:
    x: np.ndarray
    objective: float
    kkt_residual: float
    status: QcqpStatus
    duals: np.ndarray
    newton_steps: int = 0
    certificate: str = ""
    merit_history: List[List[float]] = field(default_factory=list, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == QcqpStatus.OPTIMAL
