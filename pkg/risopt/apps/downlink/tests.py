import math

import numpy as np
from django.test import SimpleTestCase
from downlink.entities import BeamformerSet, RisState
from downlink.serializers import ConstraintReportSerializer, RisStateSerializer
from downlink.services import DownlinkService, InitService
from downlink.testing import random_state
from scenarios.entities import Mode, Scenario
from scenarios.testing import make_config, toy_scenario


class RisStateTests(SimpleTestCase):
    def test_amplitudes_split_power(self):
        ris = RisState(np.ones(3), np.ones(3), np.ones(3), np.array([0.0, 0.6, 1.0]))
        np.testing.assert_allclose(ris.transmit_amplitude, [1.0, 0.8, 0.0])
        np.testing.assert_allclose(
            ris.reflect_amplitude**2 + ris.transmit_amplitude**2, np.ones(3)
        )

    def test_arrays_are_read_only_copies(self):
        amp = np.ones(2)
        ris = RisState(np.ones(2), np.ones(2), amp, np.zeros(2))
        amp[0] = 5.0
        self.assertEqual(ris.amp[0], 1.0)
        with self.assertRaises(ValueError):
            ris.amp[0] = 2.0

    def test_serializer_rejects_ragged_vectors(self):
        serializer = RisStateSerializer(
            data={
                "phi_r": [[1.0, 0.0], [0.0, 1.0]],
                "phi_t": [[1.0, 0.0], [0.0, 1.0]],
                "amp": [1.0],
                "varsigma": [0.5, 0.5],
            }
        )
        self.assertFalse(serializer.is_valid())


class BeamformerSetTests(SimpleTestCase):
    def test_vec_stacks_columns(self):
        W = BeamformerSet(np.arange(6).reshape(3, 2) + 0j)
        np.testing.assert_array_equal(W.vec(), [0, 2, 4, 1, 3, 5])
        np.testing.assert_array_equal(BeamformerSet.from_vec(W.vec(), 2).w, W.w)


class SignalModelTests(SimpleTestCase):
    def test_single_user_scalar_sinr(self):
        config = make_config(
            n_antennas=1, n_elements=1, n_users=1, n_users_reflect=1, noise_user=0.5,
            noise_ris=0.25,
        )
        scenario = Scenario(
            config=config,
            G=np.array([[2.0 + 0j]]),
            h_d=np.array([[1.0 + 0j]]),
            h_r=np.array([[1j]]),
            set_r=(0,),
            set_t=(),
            user_positions=np.zeros((1, 2)),
        )
        ris = RisState(np.array([1j]), np.array([1.0]), np.array([4.0]), np.array([0.6]))
        W = BeamformerSet(np.array([[1.0 + 0j]]))
        # conj(1j) * 1j * 0.6 * 2 * 2 = 2.4; plus conj(h_d) = 1
        amplitude = 1.0 + 2.4
        noise = 0.5 + 0.25 * 1.0 * 0.36 * 4.0
        self.assertAlmostEqual(DownlinkService.sinr(scenario, ris, W, 0), amplitude**2 / noise)
        self.assertAlmostEqual(
            DownlinkService.sum_rate(scenario, ris, W), math.log2(1 + amplitude**2 / noise)
        )

    def test_zero_gain_leaves_direct_link(self):
        scenario = toy_scenario(n_antennas=3, n_elements=4)
        ris, _ = random_state(scenario)
        ris = ris.replace(amp=np.zeros(4))
        np.testing.assert_allclose(
            DownlinkService.effective_rows(scenario, ris), scenario.h_d.conj()
        )
        np.testing.assert_allclose(
            DownlinkService.noise(scenario, ris), scenario.noise_user
        )

    def test_equivalent_channel_reproduces_received_amplitudes(self):
        scenario = toy_scenario(n_antennas=3, n_elements=4)
        ris, W = random_state(scenario, seed=3)
        Z = DownlinkService.received(scenario, ris, W)
        for k in range(scenario.n_users):
            channel = DownlinkService.equivalent_channel(scenario, ris, k)
            np.testing.assert_allclose(channel.conj() @ W.w, Z[k])

    def test_sinr_uses_own_column_as_signal(self):
        scenario = toy_scenario(n_antennas=3, n_elements=4)
        ris, W = random_state(scenario, seed=4)
        Z = DownlinkService.received(scenario, ris, W)
        noise = DownlinkService.noise(scenario, ris)
        expected = [
            abs(Z[k, k]) ** 2 / (np.sum(np.abs(Z[k]) ** 2) - abs(Z[k, k]) ** 2 + noise[k])
            for k in range(2)
        ]
        np.testing.assert_allclose(DownlinkService.sinrs(scenario, ris, W), expected)

    def test_power_bookkeeping(self):
        scenario = toy_scenario(n_antennas=3, n_elements=4)
        ris, W = random_state(scenario, seed=5, power=2.0)
        self.assertAlmostEqual(DownlinkService.bs_power(W), 2.0)
        amplified = np.sqrt(ris.amp)[:, None] * (scenario.G @ W.w)
        expected = np.sum(np.abs(amplified) ** 2) + scenario.noise_ris * ris.amp.sum()
        self.assertAlmostEqual(DownlinkService.ris_power(scenario, ris, W), expected)
        self.assertAlmostEqual(
            DownlinkService.element_powers(scenario, ris, W).sum(), expected
        )
        self.assertAlmostEqual(
            DownlinkService.amplified_signal_power(scenario, ris, W),
            np.sum(np.abs(amplified) ** 2),
        )


class ConstraintReportTests(SimpleTestCase):
    def test_flags_each_violation(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2, budget_bs=1.0)
        ris, W = random_state(scenario, power=1.5)
        report = DownlinkService.check_constraints(scenario, ris, W)
        self.assertAlmostEqual(report.bs_power_slack, -0.5)
        self.assertFalse(report.is_feasible())
        self.assertEqual(report.sinr_slack.size, 0)

    def test_unit_modulus_and_split_range(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2)
        ris, W = random_state(scenario, power=1e-6)
        ris = ris.replace(amp=np.zeros(2), phi_r=np.array([1.0, 2.0]))
        report = DownlinkService.check_constraints(scenario, ris, W)
        self.assertAlmostEqual(report.unit_modulus_residual, 1.0)
        self.assertFalse(report.is_feasible())
        ris = ris.replace(phi_r=np.ones(2), varsigma=np.array([0.5, 1.2]))
        report = DownlinkService.check_constraints(scenario, ris, W)
        self.assertAlmostEqual(report.varsigma_range_violation, 0.2)
        self.assertFalse(report.is_feasible())

    def test_sinr_targets(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2)
        ris, W = random_state(scenario, power=0.01)
        sinrs = DownlinkService.sinrs(scenario, ris, W)
        report = DownlinkService.check_constraints(scenario, ris, W, sinrs * 2.0)
        np.testing.assert_allclose(report.sinr_slack, -sinrs)
        self.assertFalse(report.is_feasible(check_bs=False, check_ris=False))

    def test_serializer_reports_feasibility(self):
        scenario = toy_scenario()
        ris, W = InitService.init_state(scenario)
        report = DownlinkService.check_constraints(scenario, ris, W)
        data = ConstraintReportSerializer(report).data
        self.assertTrue(data["feasible"])
        self.assertEqual(len(data["per_element_slack"]), scenario.n_elements)


class InitServiceTests(SimpleTestCase):
    def test_mode_splits(self):
        np.testing.assert_allclose(
            InitService.initial_varsigma(5, Mode.SD), [1, 1, 1, 0, 0]
        )
        np.testing.assert_allclose(
            InitService.initial_varsigma(4, Mode.EP), np.full(4, 1 / math.sqrt(2))
        )
        np.testing.assert_allclose(InitService.initial_varsigma(4, Mode.RO), np.ones(4))
        np.testing.assert_allclose(
            InitService.initial_varsigma(4, Mode.OP), np.full(4, 1 / math.sqrt(2))
        )

    def test_mmse_meets_power(self):
        scenario = toy_scenario(n_antennas=4, n_elements=3, n_users=3)
        W = InitService.mmse_beamformers(scenario.h_d.conj(), scenario.noise_user, 2.5)
        self.assertAlmostEqual(DownlinkService.bs_power(W), 2.5)

    def test_initial_state_is_feasible(self):
        for seed in range(5):
            scenario = toy_scenario(n_antennas=3, n_elements=6, seed=seed)
            ris, W = InitService.init_state(scenario)
            report = DownlinkService.check_constraints(scenario, ris, W)
            self.assertTrue(report.is_feasible(), msg=f"seed {seed}")
            self.assertAlmostEqual(DownlinkService.bs_power(W), scenario.budget_bs)
            self.assertLessEqual(report.unit_modulus_residual, 1e-12)

    def test_initial_phases_are_reproducible(self):
        scenario = toy_scenario(seed=4)
        first, _ = InitService.init_state(scenario)
        second, _ = InitService.init_state(scenario)
        np.testing.assert_array_equal(first.phi_r, second.phi_r)
        self.assertFalse(np.allclose(first.phi_r, first.phi_t))
