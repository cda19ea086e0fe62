import numpy as np
import scipy.optimize
from convex.entities import (
    ConeConstraint,
    QcqpProblem,
    QcqpStatus,
    QuadraticConstraint,
    complexify,
    realify_matrix,
    realify_vector,
)
from convex.exceptions import QcqpUsageError
from convex.services import QcqpService
from django.test import SimpleTestCase


def unit_ball(n, radius=1.0, name="ball"):
    return QuadraticConstraint(2.0 * np.eye(n), np.zeros(n), radius**2, name)


class RealifyTests(SimpleTestCase):
    def test_hermitian_form_is_preserved(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        H = M @ M.conj().T
        x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        z = realify_vector(x)
        self.assertAlmostEqual(z @ realify_matrix(H) @ z, np.real(x.conj() @ H @ x))
        np.testing.assert_allclose(complexify(z), x)


class ProblemValidationTests(SimpleTestCase):
    def test_shape_mismatch(self):
        with self.assertRaises(QcqpUsageError):
            QcqpProblem.real(np.eye(2), np.zeros(3))
        with self.assertRaises(QcqpUsageError):
            QcqpProblem.real(np.eye(2), np.zeros(2), quadratic=[unit_ball(3)])

    def test_non_hermitian_objective(self):
        with self.assertRaises(QcqpUsageError):
            QcqpProblem.real(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))

    def test_non_finite_data(self):
        with self.assertRaises(QcqpUsageError):
            QcqpProblem.real(np.eye(2), np.array([np.nan, 0.0]))


class QcqpServiceTests(SimpleTestCase):
    def test_unconstrained_least_squares(self):
        problem = QcqpProblem.real(2.0 * np.eye(2), np.array([2.0, 4.0]))
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
        np.testing.assert_allclose(solution.x, [1.0, 2.0])
        self.assertAlmostEqual(solution.objective, -5.0)

    def test_projection_onto_ball(self):
        problem = QcqpProblem.real(np.eye(2), np.array([3.0, 4.0]), quadratic=[unit_ball(2)])
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
        np.testing.assert_allclose(solution.x, [0.6, 0.8], atol=1e-6)
        # z (1 + 2 lambda) = q
        self.assertAlmostEqual(solution.duals[0], 2.0, places=4)
        self.assertLessEqual(solution.kkt_residual, 1e-8)

    def test_inactive_constraint_leaves_interior_optimum(self):
        problem = QcqpProblem.real(
            np.eye(2), np.array([0.3, -0.2]), quadratic=[unit_ball(2)]
        )
        solution = QcqpService.solve_qcqp(problem)
        np.testing.assert_allclose(solution.x, [0.3, -0.2], atol=1e-6)
        self.assertAlmostEqual(solution.duals[0], 0.0, places=6)

    def test_linear_objective_over_cone(self):
        cone = ConeConstraint(np.eye(2), np.zeros(2), np.zeros(2), 1.0, "disc")
        problem = QcqpProblem.real(np.zeros((2, 2)), np.array([1.0, 0.0]), cones=[cone])
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
        np.testing.assert_allclose(solution.x, [1.0, 0.0], atol=1e-5)
        self.assertAlmostEqual(solution.objective, -1.0, places=6)

    def test_complex_problem_maps_back(self):
        q = np.array([3.0 + 4.0j, 0.0])
        ball = QuadraticConstraint(2.0 * np.eye(2), np.zeros(2), 1.0)
        problem = QcqpProblem.from_complex(2.0 * np.eye(2), q, quadratic=[ball])
        solution = QcqpService.solve_qcqp(problem)
        self.assertTrue(np.iscomplexobj(solution.x))
        np.testing.assert_allclose(solution.x, q / 5.0, atol=1e-6)

    def test_complex_cone_with_affine_right_side(self):
        # maximize 2 Re{x_1} + Re{x_2} with |x_1| <= Re{x_2} inside the unit ball
        cone = ConeConstraint(
            np.array([[1.0, 0.0]]), np.zeros(1), np.array([0.0, 1.0]), 0.0
        )
        ball = QuadraticConstraint(2.0 * np.eye(2), np.zeros(2), 1.0)
        problem = QcqpProblem.from_complex(
            np.zeros((2, 2)), np.array([2.0, 1.0]), quadratic=[ball], cones=[cone]
        )
        solution = QcqpService.solve_qcqp(problem)
        np.testing.assert_allclose(
            solution.x, np.array([1.0, 1.0]) / np.sqrt(2.0), atol=1e-5
        )

    def test_matches_slsqp_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            n = 4
            M = rng.standard_normal((n, n))
            P = M @ M.T + np.eye(n)
            q = 5.0 * rng.standard_normal(n)
            constraints = []
            for index in range(2):
                B = rng.standard_normal((n, n))
                constraints.append(
                    QuadraticConstraint(
                        B @ B.T + 0.1 * np.eye(n), rng.standard_normal(n), 1.0, f"e{index}"
                    )
                )
            problem = QcqpProblem.real(P, q, quadratic=constraints)
            solution = QcqpService.solve_qcqp(problem)
            self.assertEqual(solution.status, QcqpStatus.OPTIMAL)

            reference = scipy.optimize.minimize(
                problem.objective,
                np.zeros(n),
                jac=lambda z: P @ z - q,
                method="SLSQP",
                constraints=[
                    {
                        "type": "ineq",
                        "fun": lambda z, item=item: item.b
                        - (0.5 * z @ item.C @ z - item.l @ z),
                    }
                    for item in constraints
                ],
                options={"ftol": 1e-12, "maxiter": 500},
            )
            self.assertTrue(reference.success)
            self.assertAlmostEqual(
                solution.objective, reference.fun, delta=1e-5 * (1.0 + abs(reference.fun))
            )

    def test_infeasible_constraints_get_certificate(self):
        # ||z||^2 <= 1 together with z_1 >= 2
        half_plane = QuadraticConstraint(np.zeros((2, 2)), np.array([1.0, 0.0]), -2.0)
        problem = QcqpProblem.real(
            np.eye(2), np.zeros(2), quadratic=[unit_ball(2), half_plane]
        )
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.INFEASIBLE)
        self.assertFalse(solution.is_optimal)
        self.assertIn("phase-I", solution.certificate)

    def test_phase_one_finds_interior_start(self):
        # the origin violates z_1 >= 0.5, so the solver needs phase I
        half_plane = QuadraticConstraint(np.zeros((2, 2)), np.array([1.0, 0.0]), -0.5)
        problem = QcqpProblem.real(
            np.eye(2), np.zeros(2), quadratic=[unit_ball(2), half_plane]
        )
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
        np.testing.assert_allclose(solution.x, [0.5, 0.0], atol=1e-6)

    def test_warm_start_is_used_when_interior(self):
        problem = QcqpProblem.real(np.eye(2), np.array([3.0, 4.0]), quadratic=[unit_ball(2)])
        solution = QcqpService.solve_qcqp(problem, x0=np.array([0.5, 0.6]))
        np.testing.assert_allclose(solution.x, [0.6, 0.8], atol=1e-6)

    def test_iteration_cap_reports_max_iter(self):
        problem = QcqpProblem.real(np.eye(2), np.array([3.0, 4.0]), quadratic=[unit_ball(2)])
        solution = QcqpService.solve_qcqp(problem, max_iter=1)
        self.assertEqual(solution.status, QcqpStatus.MAX_ITER)
        self.assertLessEqual(solution.newton_steps, 1)

    def test_merit_decreases_within_each_centering_stage(self):
        rng = np.random.default_rng(21)
        n = 4
        M = rng.standard_normal((n, n))
        B = rng.standard_normal((n, n))
        problem = QcqpProblem.real(
            M @ M.T + np.eye(n),
            5.0 * rng.standard_normal(n),
            quadratic=[
                unit_ball(n),
                QuadraticConstraint(B @ B.T + 0.1 * np.eye(n), rng.standard_normal(n), 1.0),
            ],
        )
        solution = QcqpService.solve_qcqp(problem)
        self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
        self.assertGreater(len(solution.merit_history), 1)
        for stage in solution.merit_history:
            self.assertTrue(np.all(np.isfinite(stage)))
            self.assertTrue(np.all(np.diff(stage) <= 0.0), stage)
        self.assertLessEqual(
            sum(len(stage) - 1 for stage in solution.merit_history), solution.newton_steps
        )


def grid_minimum(objective, feasible, n, radius, rounds=30, points=21):
    """Best feasible value over a grid that zooms in on its best point."""
    center = np.zeros(n)
    best = objective(center[None, :])[0] if feasible(center[None, :])[0] else np.inf
    first = {1: 4001, 2: 401, 3: 81}[n]
    for round_index in range(rounds):
        count = first if round_index == 0 else points
        axes = [np.linspace(c - radius, c + radius, count) for c in center]
        Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        values = np.where(feasible(Z), objective(Z), np.inf)
        index = int(np.argmin(values))
        if values[index] <= best:
            best, center = values[index], Z[index]
        radius = 4.0 * (2.0 * radius / (count - 1))
    return best


class GridOracleTests(SimpleTestCase):
    def test_small_instances_match_grid_search(self):
        rng = np.random.default_rng(5)
        for instance in range(50):
            n = 1 + instance % 3
            M = rng.standard_normal((n, n))
            P = M @ M.T + np.eye(n)
            q = 2.0 * rng.standard_normal(n)
            constraints = []
            for _ in range(1 + instance % 2):
                B = rng.standard_normal((n, n))
                constraints.append(
                    QuadraticConstraint(
                        B @ B.T + 0.5 * np.eye(n), 0.3 * rng.standard_normal(n), 1.0
                    )
                )
            problem = QcqpProblem.real(P, q, quadratic=constraints)
            solution = QcqpService.solve_qcqp(problem)
            self.assertEqual(solution.status, QcqpStatus.OPTIMAL)
            self.assertLessEqual(solution.kkt_residual, 1e-8)

            def objective(Z):
                return 0.5 * np.einsum("ij,jk,ik->i", Z, P, Z) - Z @ q

            def feasible(Z):
                inside = np.ones(Z.shape[0], dtype=bool)
                for item in constraints:
                    values = 0.5 * np.einsum("ij,jk,ik->i", Z, item.C, Z) - Z @ item.l
                    inside &= values <= item.b
                return inside

            # 0.25 ||z||^2 - ||l|| ||z|| <= 1 bounds every feasible point
            reach = max(np.linalg.norm(item.l) for item in constraints)
            radius = 2.0 * (reach + np.sqrt(reach**2 + 1.0)) + 0.1
            reference = grid_minimum(objective, feasible, n, radius)
            self.assertAlmostEqual(solution.objective, reference, delta=1e-3)
            self.assertLessEqual(solution.objective, reference + 1e-8)
