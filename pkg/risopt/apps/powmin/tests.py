from collections import Counter

import numpy as np
from django.test import SimpleTestCase, tag
from downlink.entities import BeamformerSet
from downlink.services import DownlinkService, InitService
from downlink.testing import random_state
from powmin.entities import FeasibilityReport, PowMinParams
from powmin.exceptions import InfeasibleStart
from powmin.serializers import PowMinParamsSerializer
from powmin.services import PowerMinService
from scenarios.entities import Mode
from scenarios.services import ScenarioService
from scenarios.testing import toy_scenario


def fast_params(**overrides):
    values = dict(max_iter=5, rel_tol=1e-4, dinkelbach_max_iter=5)
    values.update(overrides)
    return PowMinParams(**values)


def feasible_state(scenario, targets, mode=Mode.OP):
    ris, W, _ = PowerMinService.feasible_start(scenario, targets, fast_params(), mode)
    return ris, W


class QuantityTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.ris, self.W = random_state(self.scenario, seed=1, power=0.7)

    def test_power_terms(self):
        amplified = DownlinkService.amplified_signal_power(self.scenario, self.ris, self.W)
        self.assertAlmostEqual(
            PowerMinService.total_power(self.scenario, self.ris, self.W), 0.7 + amplified
        )
        self.assertAlmostEqual(
            PowerMinService.weighted_power(self.scenario, self.ris, self.W, 0.25),
            0.25 * 0.7 + 0.75 * amplified,
        )

    def test_min_sinr_ratio(self):
        sinrs = DownlinkService.sinrs(self.scenario, self.ris, self.W)
        targets = np.array([2.0 * sinrs[0], 0.5 * sinrs[1]])
        self.assertAlmostEqual(
            PowerMinService.min_sinr_ratio(self.scenario, self.ris, self.W, targets), 0.5
        )
        self.assertAlmostEqual(
            PowerMinService.min_sinr_ratio(
                self.scenario, self.ris, self.W, targets, users=(1,)
            ),
            2.0,
        )
        self.assertEqual(
            PowerMinService.min_sinr_ratio(self.scenario, self.ris, self.W, np.zeros(2)),
            float("inf"),
        )
        self.assertFalse(
            PowerMinService.meets_targets(self.scenario, self.ris, self.W, targets)
        )


class FeasibilityPrecheckTests(SimpleTestCase):
    def test_generic_channels_have_full_rank(self):
        report = PowerMinService.feasibility_precheck(toy_scenario(n_antennas=2))
        self.assertTrue(report.full_rank)
        self.assertEqual((report.rank, report.required), (2, 2))

    def test_single_antenna_cannot_serve_two_users(self):
        report = PowerMinService.feasibility_precheck(toy_scenario(n_antennas=1))
        self.assertFalse(report.full_rank)
        self.assertEqual(report.rank, 1)
        self.assertEqual(report.singular_values.size, 1)

    def test_rank_deficiency_stops_the_solver(self):
        scenario = toy_scenario(n_antennas=1, sinr_target=1e6)
        with self.assertRaises(InfeasibleStart) as context:
            PowerMinService.run_power_min(scenario, params=fast_params())
        self.assertIsInstance(context.exception.report, FeasibilityReport)
        self.assertEqual(context.exception.trace.records, [])


class LogSumExpTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=4, n_users=3, n_users_reflect=2)
        self.ris, self.W = random_state(self.scenario, seed=3)
        self.terms = PowerMinService.phase_terms(
            self.scenario, self.ris, self.W, np.array([1.0, 2.0, 0.5]), "r"
        )

    def test_gradient_matches_finite_differences(self):
        epsilon, varpi, h = 0.1, 0.8, 1e-6
        phi = self.ris.phi_r
        gradient = PowerMinService.lse_phase_gradient(self.terms, phi, varpi, epsilon)
        direction = np.random.default_rng(0).standard_normal(4)
        for step in (direction, 1j * direction):
            numeric = (
                PowerMinService.lse_phase_objective(self.terms, phi + h * step, varpi, epsilon)
                - PowerMinService.lse_phase_objective(
                    self.terms, phi - h * step, varpi, epsilon
                )
            ) / (2 * h)
            expected = np.real(np.vdot(gradient, step))
            self.assertAlmostEqual(numeric, expected, delta=1e-5 * (1.0 + abs(expected)))

    def test_smoothing_bounds_the_maximum(self):
        epsilon, varpi = 1e-2, 0.5
        state = PowerMinService.phase_state(self.terms, self.ris.phi_r)
        worst = np.max(state.f - varpi * state.g)
        value = PowerMinService.lse_phase_objective(self.terms, self.ris.phi_r, varpi, epsilon)
        self.assertGreaterEqual(value, worst - 1e-12)
        self.assertLessEqual(value, worst + epsilon * np.log(2) + 1e-12)

    def test_ratio_is_inverse_of_worst_sinr_margin(self):
        targets = np.array([1.0, 2.0, 0.5])
        state = PowerMinService.phase_state(self.terms, self.ris.phi_r)
        self.assertEqual(state.users, (0, 1))
        ratio = PowerMinService.min_sinr_ratio(
            self.scenario, self.ris, self.W, targets, users=(0, 1)
        )
        self.assertAlmostEqual(state.varpi, 1.0 / ratio)

    def test_untargeted_side_has_no_terms(self):
        self.assertIsNone(
            PowerMinService.phase_terms(
                self.scenario, self.ris, self.W, np.array([1.0, 1.0, 0.0]), "t"
            )
        )


class SplitSearchTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.ris, self.W = random_state(self.scenario, seed=5)
        self.targets = np.array([1.0, 1.5])
        self.terms = PowerMinService.split_terms(self.scenario, self.ris, self.W, self.targets)

    def test_split_state_matches_sinrs(self):
        state = PowerMinService.split_state(self.terms, self.ris.varsigma)
        ratio = PowerMinService.min_sinr_ratio(self.scenario, self.ris, self.W, self.targets)
        self.assertAlmostEqual(state.varpi, 1.0 / ratio)
        moved = np.array([0.2, 0.9, 0.5])
        state = PowerMinService.split_state(self.terms, moved)
        ratio = PowerMinService.min_sinr_ratio(
            self.scenario, self.ris.replace(varsigma=moved), self.W, self.targets
        )
        # the reference noise cancels in f / g
        self.assertAlmostEqual(np.max(state.ratios), 1.0 / ratio)

    def test_element_update_against_dense_scan(self):
        params = fast_params(epsilon=0.1)
        for seed in range(20):
            scenario = toy_scenario(n_antennas=2, n_elements=3, seed=seed)
            ris, W = random_state(scenario, seed=seed)
            terms = PowerMinService.split_terms(scenario, ris, W, self.targets)
            varpi = PowerMinService.split_state(terms, ris.varsigma).varpi
            for m in range(3):
                best = PowerMinService.varsigma_min_element_update(
                    terms, ris.varsigma, m, varpi, params
                )
                self.assertTrue(0.0 <= best <= 1.0)

                def value(s):
                    trial = np.array(ris.varsigma, copy=True)
                    trial[m] = s
                    return PowerMinService.varsigma_min_objective(
                        terms, trial, varpi, params.epsilon
                    )

                scan = [value(s) for s in np.linspace(0.0, 1.0, 2001)]
                self.assertLessEqual(value(best), value(ris.varsigma[m]) + 1e-12)
                self.assertLessEqual(
                    value(best),
                    min(scan) + 1e-3 * (1.0 + max(scan) - min(scan)),
                    f"seed {seed} element {m}",
                )


class BlockUpdateTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.targets = self.scenario.sinr_targets
        self.ris, self.W = feasible_state(self.scenario, self.targets)

    def test_feasible_start_meets_targets(self):
        self.assertTrue(
            PowerMinService.meets_targets(self.scenario, self.ris, self.W, self.targets)
        )

    def test_beamformer_update_lowers_weighted_power(self):
        counters = Counter()
        W = PowerMinService.update_beamformers_min(
            self.scenario, self.ris, self.W, self.targets, fast_params(), counters
        )
        self.assertTrue(
            PowerMinService.meets_targets(self.scenario, self.ris, W, self.targets, 1e-6)
        )
        self.assertLessEqual(
            PowerMinService.weighted_power(self.scenario, self.ris, W, 0.5),
            PowerMinService.weighted_power(self.scenario, self.ris, self.W, 0.5) + 1e-12,
        )
        self.assertGreater(counters["newton_steps"], 0)
        report = DownlinkService.check_constraints(self.scenario, self.ris, W)
        self.assertTrue(report.is_feasible(check_bs=False, check_ris=False))

    def test_zero_targets_switch_beams_off(self):
        W = PowerMinService.update_beamformers_min(
            self.scenario, self.ris, self.W, np.zeros(2)
        )
        self.assertEqual(DownlinkService.bs_power(W), 0.0)

    def test_amplification_update_keeps_targets(self):
        W = PowerMinService.update_beamformers_min(
            self.scenario, self.ris, self.W, self.targets, fast_params()
        )
        amp = PowerMinService.update_amplification_min(
            self.scenario, self.ris, W, self.targets, fast_params()
        )
        ris = self.ris.replace(amp=amp)
        self.assertTrue(np.all(amp >= 0.0))
        self.assertTrue(
            PowerMinService.meets_targets(self.scenario, ris, W, self.targets, 1e-5)
        )
        cap = InitService.amplification_cap(self.scenario, W, use_ris_budget=False)
        self.assertTrue(np.all(amp <= cap * (1 + 1e-12)))

    def test_phase_balancing_does_not_shrink_margin(self):
        before = PowerMinService.min_sinr_ratio(self.scenario, self.ris, self.W, self.targets)
        phi_r, phi_t = PowerMinService.qos_balance_phases(
            self.scenario, self.ris, self.W, self.targets, fast_params()
        )
        np.testing.assert_allclose(np.abs(phi_r), 1.0)
        np.testing.assert_allclose(np.abs(phi_t), 1.0)
        after = PowerMinService.min_sinr_ratio(
            self.scenario, self.ris.replace(phi_r=phi_r, phi_t=phi_t), self.W, self.targets
        )
        self.assertGreaterEqual(after, before - 2e-6)

    def test_split_update_does_not_shrink_margin(self):
        before = PowerMinService.min_sinr_ratio(self.scenario, self.ris, self.W, self.targets)
        varsigma = PowerMinService.update_varsigma_min(
            self.scenario, self.ris, self.W, self.targets, fast_params()
        )
        self.assertTrue(np.all((varsigma >= 0.0) & (varsigma <= 1.0)))
        after = PowerMinService.min_sinr_ratio(
            self.scenario, self.ris.replace(varsigma=varsigma), self.W, self.targets
        )
        self.assertGreaterEqual(after, before - 2e-6)

    def test_pair_update_lowers_weighted_power_within_sweep_limit(self):
        params = fast_params()
        counters = Counter()
        ris, W = PowerMinService.update_pair_min(
            self.scenario, self.ris, self.W, self.targets, params, counters
        )
        before = PowerMinService.weighted_power(self.scenario, self.ris, self.W, 0.5)
        after = PowerMinService.weighted_power(self.scenario, ris, W, 0.5)
        self.assertLessEqual(after, before * (1 + 1e-12))
        self.assertTrue(PowerMinService.meets_targets(self.scenario, ris, W, self.targets, 1e-9))
        self.assertGreaterEqual(counters["pair_sweeps"], 1)
        self.assertLessEqual(counters["pair_sweeps"], params.pair_max_sweeps)


class OptimalityTests(SimpleTestCase):
    def test_beamformer_step_leaves_every_target_active(self):
        for seed in range(20):
            scenario = toy_scenario(n_antennas=3, n_elements=4, seed=seed)
            targets = np.asarray(scenario.sinr_targets)
            ris, W = feasible_state(scenario, targets)
            W = PowerMinService.update_beamformers_min(
                scenario, ris, W, targets, fast_params()
            )
            ratios = DownlinkService.sinrs(scenario, ris, W) / targets
            self.assertTrue(np.all(ratios >= 1.0 - 1e-9), f"seed {seed}: {ratios}")
            self.assertTrue(np.all(ratios <= 1.0 + 1e-6), f"seed {seed}: {ratios}")

    def test_single_user_without_ris_gain_matches_closed_form(self):
        scenario = toy_scenario(n_antennas=3, n_elements=2, n_users=1, seed=6)
        ris, _ = InitService.init_state(scenario)
        ris = ris.replace(amp=np.zeros(2))
        h = scenario.h_d[0]
        gamma = scenario.sinr_targets[0]
        required = gamma * scenario.noise_user / np.linalg.norm(h) ** 2
        W = BeamformerSet((h * np.sqrt(4.0 * required) / np.linalg.norm(h))[:, None])

        W = PowerMinService.update_beamformers_min(
            scenario, ris, W, scenario.sinr_targets, fast_params()
        )
        w = W.column(0)
        self.assertAlmostEqual(np.linalg.norm(w) ** 2 / required, 1.0, places=6)
        self.assertAlmostEqual(
            abs(np.vdot(h, w)) / (np.linalg.norm(h) * np.linalg.norm(w)), 1.0, places=9
        )


class RunPowerMinTests(SimpleTestCase):
    def test_power_drops_and_targets_hold(self):
        scenario = toy_scenario(n_antennas=2, n_elements=3)
        ris, W, trace = PowerMinService.run_power_min(scenario, params=fast_params())
        powers = trace.objectives
        self.assertLessEqual(powers[1], powers[0] * (1 + 1e-9))
        self.assertLessEqual(powers[-1], powers[0] * (1 + 1e-3))
        self.assertAlmostEqual(powers[-1], PowerMinService.total_power(scenario, ris, W))
        self.assertTrue(
            PowerMinService.meets_targets(scenario, ris, W, scenario.sinr_targets, 1e-6)
        )
        for record in trace.records[1:]:
            self.assertLessEqual(
                record["power_after_pair"], powers[record["iteration"] - 1] * (1 + 1e-8)
            )
        record = trace.records[-1]
        self.assertEqual(record["total_power_w"], record["objective"])
        self.assertAlmostEqual(record["weighted_objective"], 0.5 * record["objective"])
        self.assertGreaterEqual(record["min_sinr_ratio"], 1.0 - 1e-5)

    def test_zero_targets_need_no_power(self):
        scenario = toy_scenario(n_antennas=2, n_elements=3)
        ris, W, trace = PowerMinService.run_power_min(scenario, targets=np.zeros(2))
        self.assertEqual(trace.final_objective, 0.0)
        self.assertTrue(trace.converged)
        self.assertFalse(np.any(W.w))
        self.assertFalse(np.any(ris.amp))

    def test_equal_split_mode_keeps_split(self):
        scenario = toy_scenario(n_antennas=2, n_elements=4)
        ris, _, trace = PowerMinService.run_power_min(
            scenario, params=fast_params(max_iter=2), mode=Mode.EP
        )
        np.testing.assert_allclose(ris.varsigma, InitService.initial_varsigma(4, Mode.EP))
        self.assertEqual(trace.mode, "ep")

    def test_unreachable_targets_without_scale_up(self):
        scenario = toy_scenario(n_antennas=2, n_elements=3)
        with self.assertRaises(InfeasibleStart) as context:
            PowerMinService.feasible_start(
                scenario, np.full(2, 1e9), fast_params(scale_up_cap=0), Mode.OP
            )
        self.assertFalse(context.exception.report.is_feasible(check_bs=False))
        ris, W = context.exception.state
        self.assertIsInstance(W, BeamformerSet)

    @tag("slow")
    def test_desk_runs_converge_within_iteration_cap(self):
        for seed in range(4):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "desk", "seed": seed})
            )
            for mode in (Mode.OP, Mode.EP, Mode.SD):
                _, _, trace = PowerMinService.run_power_min(scenario, mode=mode)
                self.assertTrue(trace.converged, f"seed {seed} {mode.value}")
                self.assertLessEqual(trace.iterations, 100)

    @tag("slow")
    def test_full_scale_runs_converge_within_eighty_iterations(self):
        params = PowMinParams.from_settings(max_iter=80)
        converged = 0
        for seed in range(10):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "paper-default", "seed": seed})
            )
            _, _, trace = PowerMinService.run_power_min(scenario, params=params)
            converged += trace.converged
        self.assertGreaterEqual(converged, 9)

    @tag("slow")
    def test_desk_runs_keep_targets_and_pair_power_monotone(self):
        for seed in range(50):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "desk", "seed": seed})
            )
            ris, W, trace = PowerMinService.run_power_min(scenario)
            self.assertTrue(
                PowerMinService.meets_targets(scenario, ris, W, scenario.sinr_targets, 1e-6),
                f"seed {seed}",
            )
            powers = trace.objectives
            for record in trace.records[1:]:
                previous = powers[record["iteration"] - 1]
                self.assertLessEqual(
                    record["power_after_pair"], previous * (1 + 1e-8), f"seed {seed}"
                )

    @tag("slow")
    def test_beats_random_feasible_states(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2, seed=3)
        targets = np.asarray(scenario.sinr_targets)
        _, _, trace = PowerMinService.run_power_min(scenario)
        rng = np.random.default_rng(5)
        best = np.inf
        for _ in range(10_000):
            ris, W = random_state(scenario, seed=int(rng.integers(2**32)))
            signal, interference = DownlinkService.signal_and_interference(scenario, ris, W)
            noise = DownlinkService.noise(scenario, ris)
            room = signal - targets * interference
            if np.any(room <= 0.0):
                continue
            # smallest common scaling of W that lifts every SINR to its target
            scale = np.max(targets * noise / room)
            W = BeamformerSet(W.w * np.sqrt(scale))
            report = DownlinkService.check_constraints(scenario, ris, W)
            if not report.is_feasible(check_bs=False, check_ris=False):
                continue
            best = min(best, PowerMinService.total_power(scenario, ris, W))
        self.assertTrue(np.isfinite(best))
        self.assertLessEqual(trace.final_objective, best * (1 + 1e-6))


class ParamsTests(SimpleTestCase):
    def test_alpha_range(self):
        with self.assertRaises(ValueError):
            PowMinParams(alpha=1.0)
        self.assertFalse(PowMinParamsSerializer(data={"alpha": 0.0}).is_valid())

    def test_serializer_builds_from_settings(self):
        serializer = PowMinParamsSerializer(data={"alpha": 0.3, "scale_up_cap": 4})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.save()
        self.assertEqual((params.alpha, params.scale_up_cap), (0.3, 4))
        self.assertEqual(params.epsilon, 1e-3)

    def test_pair_limits(self):
        serializer = PowMinParamsSerializer(data={"pair_max_sweeps": 4, "pair_tol": 1e-9})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.save()
        self.assertEqual((params.pair_max_sweeps, params.pair_tol), (4, 1e-9))
        self.assertFalse(PowMinParamsSerializer(data={"pair_max_sweeps": 0}).is_valid())
        self.assertFalse(PowMinParamsSerializer(data={"pair_tols": 1e-9}).is_valid())
