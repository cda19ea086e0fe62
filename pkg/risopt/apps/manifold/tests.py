import numpy as np
from django.test import SimpleTestCase
from manifold.entities import CirclePoint, ManifoldParams
from manifold.exceptions import DegenerateRetractionError, NonFiniteObjectiveError
from manifold.services import QUADRATIC_STEP_EPS, CircleManifold


def random_quadratic(m, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return M @ M.conj().T, c


def random_phases(m, seed):
    return np.exp(2j * np.pi * np.random.default_rng(seed).uniform(size=m))


class GeometryTests(SimpleTestCase):
    def test_retraction_normalizes(self):
        point = CircleManifold.retract(np.array([3.0 + 4.0j, -0.5]))
        np.testing.assert_allclose(point.phi, [0.6 + 0.8j, -1.0])
        self.assertLessEqual(point.residual, 1e-15)

    def test_zero_entry_keeps_previous_phase(self):
        with self.assertRaises(DegenerateRetractionError) as context:
            CircleManifold.retract(np.array([1.0, 0.0]))
        self.assertEqual(context.exception.indices, [1])
        point = CircleManifold.retract(np.array([2.0, 0.0]), previous=np.array([1.0, 1j]))
        np.testing.assert_allclose(point.phi, [1.0, 1j])

    def test_tangent_projection_is_orthogonal(self):
        phi = random_phases(6, 1)
        g = np.random.default_rng(2).standard_normal(6) + 1j
        tangent = CircleManifold.project_tangent(g, phi)
        np.testing.assert_allclose(np.real(tangent * phi.conj()), 0.0, atol=1e-14)

    def test_quadratic_gradient_matches_finite_differences(self):
        B, c = random_quadratic(4, 3)
        phi = random_phases(4, 4)
        gradient = -CircleManifold.euclidean_grad_quadratic(B, c, phi)
        direction = np.random.default_rng(5).standard_normal(4) * (1 + 1j)
        h = 1e-6
        numeric = (
            CircleManifold.quadratic_value(B, c, phi + h * direction)
            - CircleManifold.quadratic_value(B, c, phi - h * direction)
        ) / (2 * h)
        self.assertAlmostEqual(numeric, np.real(np.vdot(gradient, direction)), places=5)


class ParamsTests(SimpleTestCase):
    def test_rejects_bad_values(self):
        with self.assertRaises(ValueError):
            ManifoldParams(max_iter=0)
        with self.assertRaises(ValueError):
            ManifoldParams(shrink=1.0)

    def test_settings_defaults_and_overrides(self):
        params = ManifoldParams.from_settings(max_iter=7)
        self.assertEqual(params.max_iter, 7)
        self.assertEqual(params.rel_tol, 1e-8)


class DescentTests(SimpleTestCase):
    def test_values_never_increase(self):
        B, c = random_quadratic(8, 0)
        point, trace = CircleManifold.minimize_quadratic(B, c, random_phases(8, 1))
        self.assertGreater(trace.iterations, 0)
        self.assertTrue(np.all(np.diff(trace.values) <= 1e-12))
        self.assertLessEqual(point.residual, 1e-12)
        self.assertAlmostEqual(
            trace.values[-1], CircleManifold.quadratic_value(B, c, point.phi)
        )

    def test_two_element_grid_oracle(self):
        theta = np.linspace(0.0, 2 * np.pi, 62_832, endpoint=False)
        p1 = np.exp(1j * theta)
        for seed in range(20):
            B, c = random_quadratic(2, 100 + seed)
            # the second phase has a closed-form best response to the first
            grid = (
                np.real(B[0, 0] + B[1, 1])
                - 2.0 * np.real(p1.conj() * c[0])
                - 2.0 * np.abs(c[1] - B[1, 0] * p1)
            )
            best = min(
                CircleManifold.minimize_quadratic(B, c, random_phases(2, start))[1].values[-1]
                for start in range(8)
            )
            self.assertLessEqual(best, grid.min() + 1e-3)
            self.assertGreaterEqual(best, grid.min() - 1e-6)

    def test_general_objective(self):
        # maximize |sum phi_m|^2 has optimum M^2 at aligned phases
        m = 5
        point, trace = CircleManifold.minimize_on_circles(
            lambda phi: -abs(phi.sum()) ** 2,
            lambda phi: -2.0 * phi.sum() * np.ones(m),
            random_phases(m, 6),
            ManifoldParams(max_iter=2000, rel_tol=1e-14),
            initial_step=0.05,
        )
        self.assertAlmostEqual(abs(point.phi.sum()) ** 2, m**2, places=5)
        self.assertTrue(trace.converged)

    def test_quadratic_steps_halve_from_a_fixed_base(self):
        B, c = random_quadratic(6, 4)
        base = 1.0 / (2.0 * np.linalg.norm(B) + QUADRATIC_STEP_EPS)
        for scale in (1e-3, 1.0, 1e3):
            _, trace = CircleManifold.minimize_quadratic(
                B, scale * c, random_phases(6, 5), ManifoldParams(max_iter=40)
            )
            self.assertGreater(trace.iterations, 0)
            halvings = np.log2(base / np.array(trace.steps))
            self.assertTrue(np.all(halvings > -1e-9))
            np.testing.assert_allclose(halvings, np.round(halvings), atol=1e-9)

    def test_iteration_cap(self):
        B, c = random_quadratic(6, 2)
        _, trace = CircleManifold.minimize_quadratic(
            B, c, random_phases(6, 3), ManifoldParams(max_iter=2, rel_tol=1e-300)
        )
        self.assertLessEqual(trace.iterations, 2)

    def test_non_finite_objective_raises(self):
        with self.assertRaises(NonFiniteObjectiveError):
            CircleManifold.minimize_on_circles(
                lambda phi: float("nan"), lambda phi: phi, np.ones(2)
            )

    def test_residual_measures_modulus_error(self):
        self.assertEqual(CirclePoint(np.ones(3) * 1j).residual, 0.0)
        self.assertAlmostEqual(CirclePoint(np.array([2.0, 1.0])).residual, 1.0)
