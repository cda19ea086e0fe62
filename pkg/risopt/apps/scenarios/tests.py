import json
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from scenarios.entities import ChannelKind, LinkGeometry, Mode
from scenarios.exceptions import DomainError, ScenarioConfigError
from scenarios.services import ScenarioService
from scenarios.utils import db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm


class UnitConversionTests(SimpleTestCase):
    def test_dbm_and_db_conversions(self):
        self.assertAlmostEqual(dbm_to_watts(30.0), 1.0)
        self.assertAlmostEqual(dbm_to_watts(16.0), 0.039810717, places=8)
        self.assertAlmostEqual(watts_to_dbm(1e-3), 0.0)
        self.assertAlmostEqual(db_to_linear(12.0), 15.848931924, places=8)
        self.assertAlmostEqual(linear_to_db(100.0), 20.0)


class PathLossTests(SimpleTestCase):
    def test_reference_distance_gives_reference_gain(self):
        self.assertAlmostEqual(ScenarioService.path_loss(1.0, 2.5, 1e-3, 1.0), 1e-3)

    def test_exponent_law(self):
        near = ScenarioService.path_loss(10.0, 2.0, 1e-3, 1.0)
        far = ScenarioService.path_loss(100.0, 2.0, 1e-3, 1.0)
        self.assertAlmostEqual(near / far, 100.0)

    def test_non_positive_distance_raises(self):
        with self.assertRaises(DomainError):
            ScenarioService.path_loss(0.0, 2.0, 1e-3, 1.0)
        with self.assertRaises(DomainError):
            ScenarioService.path_loss(5.0, 2.0, 1e-3, -1.0)


class StreamTests(SimpleTestCase):
    def test_same_key_reproduces_draws(self):
        first = ScenarioService.stream(7, ChannelKind.DIRECT, 1).standard_normal(5)
        second = ScenarioService.stream(7, ChannelKind.DIRECT, 1).standard_normal(5)
        np.testing.assert_array_equal(first, second)

    def test_keys_are_independent(self):
        base = ScenarioService.stream(7, ChannelKind.DIRECT, 0).standard_normal(5)
        other_user = ScenarioService.stream(7, ChannelKind.DIRECT, 1).standard_normal(5)
        other_kind = ScenarioService.stream(7, ChannelKind.RIS_USER, 0).standard_normal(5)
        self.assertFalse(np.allclose(base, other_user))
        self.assertFalse(np.allclose(base, other_kind))


class RicianChannelTests(SimpleTestCase):
    def test_pure_line_of_sight(self):
        rng = ScenarioService.stream(0, ChannelKind.BS_RIS)
        channel = ScenarioService.rician_channel(3, 2, math.inf, 4.0, None, rng)
        np.testing.assert_allclose(channel, 2.0 * np.ones((3, 2)))

    def test_steered_line_of_sight_has_unit_modulus_entries(self):
        rng = ScenarioService.stream(0, ChannelKind.BS_RIS)
        geometry = LinkGeometry(departure_sin=0.3, arrival_sin=-0.5)
        channel = ScenarioService.rician_channel(4, 3, math.inf, 1.0, geometry, rng)
        np.testing.assert_allclose(np.abs(channel), 1.0)

    def test_rayleigh_power_matches_path_loss(self):
        rng = ScenarioService.stream(3, ChannelKind.DIRECT)
        channel = ScenarioService.rician_channel(200, 200, 0.0, 1e-4, None, rng)
        self.assertAlmostEqual(np.mean(np.abs(channel) ** 2) / 1e-4, 1.0, delta=0.03)

    def test_rejects_negative_factor(self):
        rng = ScenarioService.stream(0, ChannelKind.DIRECT)
        with self.assertRaises(ValueError):
            ScenarioService.rician_channel(2, 2, -1.0, 1.0, None, rng)


class ConfigTests(SimpleTestCase):
    def test_full_scale_preset(self):
        config = ScenarioService.parse_config({"preset": "paper-default"})
        self.assertEqual(
            (config.n_antennas, config.n_elements, config.n_users, config.n_users_reflect),
            (16, 128, 4, 2),
        )
        self.assertAlmostEqual(config.budget_bs, dbm_to_watts(16.0))
        self.assertAlmostEqual(config.budget_ris, 0.01)
        self.assertAlmostEqual(config.noise_user, 1e-11)
        self.assertAlmostEqual(config.sinr_targets[0], db_to_linear(12.0))
        self.assertEqual(config.mode, Mode.OP)

    def test_desk_preset_and_element_budget_default(self):
        config = ScenarioService.parse_config({"preset": "desk"})
        self.assertEqual((config.n_antennas, config.n_elements, config.n_users), (4, 16, 2))
        self.assertEqual(len(config.budget_element), 16)
        self.assertAlmostEqual(config.budget_element[0], 2.0 * 0.01 / 16)

    def test_overrides_merge_over_preset(self):
        config = ScenarioService.parse_config(
            {"preset": "desk", "n_elements": 8, "exponents": {"bs_ris": 2.2}, "mode": "sd"}
        )
        self.assertEqual(config.n_elements, 8)
        self.assertEqual(config.exponents.bs_ris, 2.2)
        self.assertEqual(config.exponents.ris_user, 2.0)
        self.assertEqual(config.mode, Mode.SD)

    def test_unknown_key_rejected(self):
        with self.assertRaises(ScenarioConfigError) as context:
            ScenarioService.parse_config({"preset": "desk", "n_antenna": 4})
        self.assertIn("n_antenna", context.exception.errors)

    def test_unknown_preset_rejected(self):
        with self.assertRaises(ScenarioConfigError):
            ScenarioService.parse_config({"preset": "lab"})

    def test_reflect_users_bounded_by_users(self):
        with self.assertRaises(ScenarioConfigError):
            ScenarioService.parse_config({"preset": "desk", "n_users_reflect": 3})

    def test_ris_budget_must_fit_element_budgets(self):
        with self.assertRaises(ScenarioConfigError):
            ScenarioService.parse_config({"preset": "desk", "budget_element_dbm": -10.0})

    def test_per_user_targets(self):
        config = ScenarioService.parse_config(
            {"preset": "desk", "sinr_target_db": [0.0, 10.0]}
        )
        np.testing.assert_allclose(config.sinr_targets, [1.0, 10.0])
        scalar = ScenarioService.parse_config({"preset": "desk", "sinr_target_db": 3.0})
        self.assertEqual(scalar.sinr_targets, (db_to_linear(3.0),) * 2)
        untargeted = ScenarioService.parse_config({"preset": "desk", "sinr_target_db": None})
        self.assertEqual(untargeted.sinr_targets, (0.0, 0.0))

    def test_per_user_targets_need_one_value_per_user(self):
        with self.assertRaises(ScenarioConfigError) as context:
            ScenarioService.parse_config({"preset": "desk", "sinr_target_db": [0.0, 1.0, 2.0]})
        self.assertIn("sinr_target_db", context.exception.errors)
        for bad in ([], "12", [1.0, True], [1.0, None]):
            with self.assertRaises(ScenarioConfigError):
                ScenarioService.parse_config({"preset": "desk", "sinr_target_db": bad})

    def test_per_element_budgets(self):
        budgets = [0.0] * 12 + [-10.0] * 4
        config = ScenarioService.parse_config(
            {"preset": "desk", "budget_element_dbm": budgets}
        )
        np.testing.assert_allclose(config.budget_element, [1e-3] * 12 + [1e-4] * 4)
        with self.assertRaises(ScenarioConfigError) as context:
            ScenarioService.parse_config({"preset": "desk", "budget_element_dbm": [0.0] * 4})
        self.assertIn("budget_element_dbm", context.exception.errors)
        with self.assertRaises(ScenarioConfigError):
            # 16 x 0.1 mW cannot carry the 10 mW RIS budget
            ScenarioService.parse_config({"preset": "desk", "budget_element_dbm": [-10.0] * 16})

    def test_null_rician_factor_means_rayleigh(self):
        config = ScenarioService.parse_config({"preset": "desk", "rician_factor_db": None})
        self.assertEqual(config.rician_factor, 0.0)

    def test_malformed_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "broken.json")
            with open(path, "w") as file:
                file.write("{not json")
            with self.assertRaises(ScenarioConfigError):
                ScenarioService.load_config(path)
            with self.assertRaises(ScenarioConfigError):
                ScenarioService.load_config(os.path.join(directory, "missing.json"))

    def test_file_round_trip(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "config.json")
            with open(path, "w") as file:
                json.dump({"preset": "desk", "seed": 11}, file)
            self.assertEqual(ScenarioService.load_config(path).seed, 11)


class ScenarioBuildTests(SimpleTestCase):
    def setUp(self):
        self.config = ScenarioService.parse_config({"preset": "desk", "seed": 5})

    def test_shapes_and_partition(self):
        scenario = ScenarioService.build_scenario(self.config)
        self.assertEqual(scenario.G.shape, (16, 4))
        self.assertEqual(scenario.h_d.shape, (2, 4))
        self.assertEqual(scenario.h_r.shape, (2, 16))
        self.assertEqual(scenario.set_r, (0,))
        self.assertEqual(scenario.set_t, (1,))
        np.testing.assert_array_equal(scenario.reflect_mask, [True, False])

    def test_deterministic_per_seed(self):
        first = ScenarioService.build_scenario(self.config)
        second = ScenarioService.build_scenario(self.config)
        np.testing.assert_array_equal(first.G, second.G)
        np.testing.assert_array_equal(first.h_r, second.h_r)
        other = ScenarioService.build_scenario(
            ScenarioService.parse_config({"preset": "desk", "seed": 6})
        )
        self.assertFalse(np.allclose(first.h_d, other.h_d))

    def test_channels_are_read_only(self):
        scenario = ScenarioService.build_scenario(self.config)
        with self.assertRaises(ValueError):
            scenario.G[0, 0] = 0.0

    def test_users_on_circle_around_ris(self):
        scenario = ScenarioService.build_scenario(self.config)
        ris = np.array([self.config.bs_ris_distance, 0.0])
        distances = np.linalg.norm(scenario.user_positions - ris, axis=1)
        np.testing.assert_allclose(distances, self.config.user_radius)
        self.assertLessEqual(scenario.user_positions[0, 0], ris[0] + 1e-9)
        self.assertGreaterEqual(scenario.user_positions[1, 0], ris[0] - 1e-9)

    def test_full_scale_builds(self):
        scenario = ScenarioService.build_scenario(
            ScenarioService.parse_config({"preset": "paper-default"})
        )
        self.assertEqual(scenario.G.shape, (128, 16))
        self.assertTrue(np.all(np.isfinite(scenario.h_d)))


class ChannelDumpTests(SimpleTestCase):
    def setUp(self):
        self.config = ScenarioService.parse_config({"preset": "desk", "seed": 2})
        self.scenario = ScenarioService.build_scenario(self.config)

    def test_dump_reloads_identical_channels(self):
        dump = json.loads(json.dumps(ScenarioService.dump_channels(self.scenario)))
        loaded = ScenarioService.load_channels(self.config, dump)
        np.testing.assert_array_equal(loaded.G, self.scenario.G)
        np.testing.assert_array_equal(loaded.h_d, self.scenario.h_d)
        np.testing.assert_array_equal(loaded.h_r, self.scenario.h_r)
        self.assertEqual(loaded.set_r, self.scenario.set_r)

    def test_shape_mismatch_rejected(self):
        dump = ScenarioService.dump_channels(self.scenario)
        other = ScenarioService.parse_config({"preset": "desk", "n_elements": 8})
        with self.assertRaises(ScenarioConfigError):
            ScenarioService.load_channels(other, dump)
