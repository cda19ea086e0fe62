import math
from collections import Counter

import numpy as np
from django.test import SimpleTestCase, tag
from downlink.entities import BeamformerSet, RisState
from downlink.services import DownlinkService, InitService
from downlink.testing import random_state
from manifold.services import CircleManifold
from scenarios.entities import Mode
from scenarios.services import ScenarioService
from scenarios.testing import toy_scenario
from sumrate.entities import AuxState, SumRateParams, VarsigmaCoefficients
from sumrate.exceptions import SubproblemFailure
from sumrate.serializers import SumRateParamsSerializer
from sumrate.services import SumRateService


def random_aux(k_total, seed):
    rng = np.random.default_rng(seed)
    return AuxState(
        gamma=rng.uniform(0.1, 3.0, size=k_total),
        tau=rng.standard_normal(k_total) + 1j * rng.standard_normal(k_total),
    )


def fast_params(**overrides):
    values = dict(max_iter=15, rel_tol=1e-4)
    values.update(overrides)
    return SumRateParams(**values)


class SurrogateTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.ris, self.W = random_state(self.scenario, seed=1)

    def test_closed_form_auxiliaries_recover_sum_rate(self):
        aux = SumRateService.refresh_aux(self.scenario, self.ris, self.W)
        rate = DownlinkService.sum_rate(self.scenario, self.ris, self.W)
        self.assertAlmostEqual(
            SumRateService.fp_objective(self.scenario, self.ris, self.W, aux), rate
        )
        self.assertAlmostEqual(
            SumRateService.lagrangian_dual_objective(
                self.scenario, self.ris, self.W, aux.gamma
            ),
            rate * math.log(2.0),
        )

    def test_closed_form_auxiliaries_on_random_states(self):
        for seed in range(100):
            scenario = toy_scenario(
                n_antennas=2 + seed % 3,
                n_elements=2 + seed % 4,
                n_users_reflect=seed % 3,
                seed=seed,
            )
            power = 0.1 + 0.9 * (seed % 10) / 9.0
            ris, W = random_state(scenario, seed=seed, power=power)
            aux = SumRateService.refresh_aux(scenario, ris, W)
            rate = DownlinkService.sum_rate(scenario, ris, W)
            self.assertAlmostEqual(
                SumRateService.fp_objective(scenario, ris, W, aux) / rate,
                1.0,
                places=9,
                msg=f"seed {seed}",
            )

    def test_closed_form_auxiliaries_beat_perturbations(self):
        rng = np.random.default_rng(77)
        for seed in range(50):
            scenario = toy_scenario(n_antennas=2, n_elements=3, seed=seed)
            ris, W = random_state(scenario, seed=seed, power=0.5)
            aux = SumRateService.refresh_aux(scenario, ris, W)
            np.testing.assert_allclose(
                aux.gamma, DownlinkService.sinrs(scenario, ris, W), rtol=1e-12
            )
            dual = SumRateService.lagrangian_dual_objective(scenario, ris, W, aux.gamma)
            g = SumRateService.surrogate_g(scenario, ris, W, aux)
            for _ in range(100):
                gamma = aux.gamma * np.exp(0.5 * rng.standard_normal(2))
                self.assertLessEqual(
                    SumRateService.lagrangian_dual_objective(scenario, ris, W, gamma),
                    dual + 1e-12 * (1.0 + abs(dual)),
                )
                tau = aux.tau + 0.1 * np.abs(aux.tau) * (
                    rng.standard_normal(2) + 1j * rng.standard_normal(2)
                )
                self.assertLessEqual(
                    SumRateService.surrogate_g(scenario, ris, W, AuxState(aux.gamma, tau)),
                    g + 1e-12 * (1.0 + abs(g)),
                )

    def test_surrogate_bounds_rate_from_below(self):
        rate = DownlinkService.sum_rate(self.scenario, self.ris, self.W)
        for seed in range(5):
            aux = random_aux(2, seed)
            self.assertLessEqual(
                SumRateService.fp_objective(self.scenario, self.ris, self.W, aux),
                rate + 1e-12,
            )

    def test_tau_update_maximizes_surrogate(self):
        gamma = random_aux(2, 0).gamma
        tau = SumRateService.update_tau(self.scenario, self.ris, self.W, gamma)
        best = SumRateService.surrogate_g(
            self.scenario, self.ris, self.W, AuxState(gamma, tau)
        )
        rng = np.random.default_rng(3)
        for _ in range(10):
            shifted = tau + 0.05 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            self.assertLess(
                SumRateService.surrogate_g(
                    self.scenario, self.ris, self.W, AuxState(gamma, shifted)
                ),
                best,
            )


class BlockProblemTests(SimpleTestCase):
    """Each block problem is the negated surrogate in its own variables."""

    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.ris, self.W = random_state(self.scenario, seed=2, power=0.5)
        self.aux = random_aux(2, 4)

    def g(self, ris=None, W=None):
        return SumRateService.surrogate_g(
            self.scenario, ris or self.ris, W or self.W, self.aux
        )

    def test_beamformer_problem_objective(self):
        problem, scale = SumRateService.beamformer_problem(self.scenario, self.ris, self.aux)
        z = problem.to_real(self.W.vec() / scale)
        self.assertAlmostEqual(problem.objective(z), -self.g())

    def test_amplification_problem_objective(self):
        problem, scale = SumRateService.amplification_problem(
            self.scenario, self.ris, self.W, self.aux
        )
        self.assertAlmostEqual(problem.objective(np.sqrt(self.ris.amp) / scale), -self.g())

    def test_phase_quadratics_track_surrogate_changes(self):
        other, _ = random_state(self.scenario, seed=9)
        for side, name in (("r", "phi_r"), ("t", "phi_t")):
            B, c = SumRateService.build_phase_quadratic(
                self.scenario, self.ris, self.W, self.aux, side
            )
            moved = self.ris.replace(**{name: getattr(other, name)})
            self.assertAlmostEqual(
                self.g(ris=moved) - self.g(),
                CircleManifold.quadratic_value(B, c, getattr(self.ris, name))
                - CircleManifold.quadratic_value(B, c, getattr(other, name)),
            )

    def test_empty_side_has_zero_quadratic(self):
        scenario = toy_scenario(n_antennas=2, n_elements=3, n_users_reflect=2)
        B, c = SumRateService.build_phase_quadratic_t(scenario, self.ris, self.W, self.aux)
        self.assertFalse(np.any(B) or np.any(c))

    def test_split_objective_tracks_surrogate_changes(self):
        coefficients = SumRateService.varsigma_coefficients(
            self.scenario, self.ris, self.W, self.aux
        )
        moved = self.ris.replace(varsigma=np.array([0.1, 0.9, 0.4]))
        self.assertAlmostEqual(
            self.g(ris=moved) - self.g(),
            SumRateService.varsigma_objective(coefficients, self.ris.varsigma)
            - SumRateService.varsigma_objective(coefficients, moved.varsigma),
        )


class BlockUpdateTests(SimpleTestCase):
    def setUp(self):
        self.scenario = toy_scenario(n_antennas=2, n_elements=3)
        self.ris, self.W = InitService.init_state(self.scenario)
        self.aux = SumRateService.refresh_aux(self.scenario, self.ris, self.W)

    def g(self, ris, W):
        return SumRateService.surrogate_g(self.scenario, ris, W, self.aux)

    def test_beamformer_update_improves_and_stays_feasible(self):
        counters = Counter()
        W = SumRateService.update_beamformers(
            self.scenario, self.ris, self.W, self.aux, counters=counters
        )
        self.assertGreaterEqual(self.g(self.ris, W), self.g(self.ris, self.W) - 1e-12)
        self.assertGreater(counters["newton_steps"], 0)
        report = DownlinkService.check_constraints(self.scenario, self.ris, W)
        self.assertTrue(report.is_feasible())

    def test_amplification_update_respects_budgets(self):
        amp = SumRateService.update_amplification(self.scenario, self.ris, self.W, self.aux)
        ris = self.ris.replace(amp=amp)
        self.assertTrue(np.all(amp >= 0.0))
        self.assertGreaterEqual(self.g(ris, self.W), self.g(self.ris, self.W) - 1e-12)
        self.assertTrue(DownlinkService.check_constraints(self.scenario, ris, self.W).is_feasible())

    def test_phase_update_keeps_unit_modulus(self):
        counters = Counter()
        phi_r, phi_t = SumRateService.update_phases(
            self.scenario, self.ris, self.W, self.aux, counters=counters
        )
        ris = self.ris.replace(phi_r=phi_r, phi_t=phi_t)
        np.testing.assert_allclose(np.abs(phi_r), 1.0)
        np.testing.assert_allclose(np.abs(phi_t), 1.0)
        self.assertGreaterEqual(self.g(ris, self.W), self.g(self.ris, self.W) - 1e-12)

    def test_split_update_improves(self):
        varsigma = SumRateService.update_varsigma(self.scenario, self.ris, self.W, self.aux)
        self.assertTrue(np.all((varsigma >= 0.0) & (varsigma <= 1.0)))
        ris = self.ris.replace(varsigma=varsigma)
        self.assertGreaterEqual(self.g(ris, self.W), self.g(self.ris, self.W) - 1e-12)

    def test_pair_update_improves_within_sweep_limit(self):
        params = SumRateParams()
        counters = Counter()
        ris, W = SumRateService.update_pair(
            self.scenario, self.ris, self.W, self.aux, params, counters
        )
        self.assertGreaterEqual(self.g(ris, W), self.g(self.ris, self.W) - 1e-12)
        self.assertGreaterEqual(counters["pair_sweeps"], 1)
        self.assertLessEqual(counters["pair_sweeps"], params.pair_max_sweeps)
        self.assertTrue(DownlinkService.check_constraints(self.scenario, ris, W).is_feasible())

        counters = Counter()
        once = SumRateService.update_pair(
            self.scenario,
            self.ris,
            self.W,
            self.aux,
            SumRateParams(pair_max_sweeps=1),
            counters,
        )
        self.assertEqual(counters["pair_sweeps"], 1)
        self.assertLessEqual(self.g(*once), self.g(ris, W) + 1e-12)

    def test_single_user_beamformer_is_full_power_matched_filter(self):
        scenario = toy_scenario(n_antennas=3, n_elements=2, n_users=1, seed=4)
        ris, _ = InitService.init_state(scenario)
        ris = ris.replace(amp=np.zeros(2))
        h = scenario.h_d[0]
        start = h * math.sqrt(0.5 * scenario.budget_bs) / np.linalg.norm(h)
        W = BeamformerSet(start[:, None])
        for _ in range(20):
            aux = SumRateService.refresh_aux(scenario, ris, W)
            W = SumRateService.update_beamformers(scenario, ris, W, aux)

        w = W.column(0)
        self.assertAlmostEqual(np.linalg.norm(w) ** 2 / scenario.budget_bs, 1.0, places=6)
        self.assertAlmostEqual(
            abs(np.vdot(h, w)) / (np.linalg.norm(h) * np.linalg.norm(w)), 1.0, places=9
        )
        snr = scenario.budget_bs * np.linalg.norm(h) ** 2 / scenario.noise_user
        self.assertAlmostEqual(
            DownlinkService.sum_rate(scenario, ris, W) / math.log2(1.0 + snr), 1.0, places=6
        )


class SplitSolverTests(SimpleTestCase):
    def random_coefficients(self, m, seed):
        rng = np.random.default_rng(seed)
        Mr = rng.standard_normal((m, m))
        Mt = rng.standard_normal((m, m))
        return VarsigmaCoefficients(
            Q_r=Mr @ Mr.T,
            Q_t=Mt @ Mt.T,
            b_r=rng.standard_normal(m),
            b_t=rng.standard_normal(m),
        )

    def test_element_update_matches_dense_grid(self):
        grid = np.linspace(0.0, 1.0, 20001)
        for seed in range(20):
            coefficients = self.random_coefficients(3, seed)
            varsigma = np.random.default_rng(100 + seed).uniform(size=3)
            best = SumRateService.varsigma_element_update(coefficients, varsigma, 1)
            self.assertTrue(0.0 <= best <= 1.0)

            def value(s):
                trial = varsigma.copy()
                trial[1] = s
                return SumRateService.varsigma_objective(coefficients, trial)

            grid_min = min(value(s) for s in grid)
            self.assertLessEqual(value(best), grid_min + 1e-9, msg=f"seed {seed}")

    def test_sweeps_never_increase_objective(self):
        coefficients = self.random_coefficients(5, 42)
        start = np.full(5, 1.0 / math.sqrt(2.0))
        varsigma, sweeps = SumRateService.solve_varsigma(coefficients, start)
        self.assertGreaterEqual(sweeps, 1)
        self.assertLessEqual(
            SumRateService.varsigma_objective(coefficients, varsigma),
            SumRateService.varsigma_objective(coefficients, start) + 1e-12,
        )

    def test_pure_reflection_pull(self):
        # only the reflect side is rewarded, so every element reflects fully
        m = 2
        coefficients = VarsigmaCoefficients(
            Q_r=np.zeros((m, m)), Q_t=np.zeros((m, m)), b_r=np.ones(m), b_t=np.zeros(m)
        )
        varsigma, _ = SumRateService.solve_varsigma(coefficients, np.zeros(m))
        np.testing.assert_allclose(varsigma, 1.0)


class RunSumRateTests(SimpleTestCase):
    def test_rate_is_monotone_and_feasible(self):
        scenario = toy_scenario(n_antennas=2, n_elements=4)
        ris, W, trace = SumRateService.run_sum_rate(scenario, fast_params())
        rates = trace.objectives
        self.assertEqual(trace.records[0]["iteration"], 0)
        self.assertTrue(np.all(np.diff(rates) >= -1e-7 * (1.0 + np.abs(rates[:-1]))))
        self.assertAlmostEqual(rates[-1], DownlinkService.sum_rate(scenario, ris, W))
        self.assertTrue(DownlinkService.check_constraints(scenario, ris, W).is_feasible())
        self.assertIn("beamformers_amplification", trace.records[1]["timings"])
        self.assertTrue(all(record["pair_sweeps"] >= 1 for record in trace.records[1:]))

    def test_surrogate_sits_below_next_rate(self):
        scenario = toy_scenario(n_antennas=2, n_elements=3, seed=2)
        _, _, trace = SumRateService.run_sum_rate(scenario, fast_params(max_iter=5))
        for record in trace.records[1:]:
            self.assertLessEqual(
                record["surrogate"], record["objective"] + 1e-7 * (1 + record["objective"])
            )

    def test_fixed_split_modes_keep_their_split(self):
        scenario = toy_scenario(n_antennas=2, n_elements=4)
        for mode in (Mode.EP, Mode.SD, Mode.RO):
            ris, _, trace = SumRateService.run_sum_rate(
                scenario, fast_params(max_iter=3), mode=mode
            )
            np.testing.assert_allclose(
                ris.varsigma, InitService.initial_varsigma(4, mode)
            )
            self.assertEqual(trace.mode, mode.value)
            self.assertNotIn("varsigma", trace.records[1]["timings"])

    def test_initial_state_split_follows_mode(self):
        scenario = toy_scenario(n_antennas=2, n_elements=4)
        initial = InitService.init_state(scenario, Mode.OP)
        ris, _, _ = SumRateService.run_sum_rate(
            scenario, fast_params(max_iter=1), mode=Mode.SD, initial=initial
        )
        np.testing.assert_allclose(ris.varsigma, [1.0, 1.0, 0.0, 0.0])

    def test_infeasible_block_attaches_partial_trace(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2, budget_ris=1.0)
        ris, W = InitService.init_state(scenario)
        # noise alone exceeds the RIS budget, so no beamformer is admissible
        ris = ris.replace(amp=np.full(2, 1.0 / scenario.noise_ris))
        with self.assertRaises(SubproblemFailure) as context:
            SumRateService.run_sum_rate(scenario, fast_params(), initial=(ris, W))
        self.assertEqual(context.exception.trace.iterations, 0)
        self.assertIsNotNone(context.exception.state)
        self.assertIn("infeasible", str(context.exception))

    @tag("slow")
    def test_desk_runs_converge_in_every_mode(self):
        for seed in range(4):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "desk", "seed": seed})
            )
            for mode in (Mode.OP, Mode.EP, Mode.SD):
                _, _, trace = SumRateService.run_sum_rate(scenario, mode=mode)
                self.assertTrue(trace.converged, f"seed {seed} {mode.value}")
                self.assertLessEqual(trace.iterations, 100)

    @tag("slow")
    def test_full_scale_runs_converge_within_eighty_iterations(self):
        params = SumRateParams.from_settings(max_iter=80)
        converged = 0
        for seed in range(10):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "paper-default", "seed": seed})
            )
            _, _, trace = SumRateService.run_sum_rate(scenario, params)
            converged += trace.converged
        self.assertGreaterEqual(converged, 9)

    @tag("slow")
    def test_optimized_split_beats_fixed_splits_on_average(self):
        totals = {Mode.OP: 0.0, Mode.EP: 0.0, Mode.SD: 0.0}
        for seed in range(200):
            scenario = ScenarioService.build_scenario(
                ScenarioService.parse_config({"preset": "desk", "seed": seed})
            )
            for mode in totals:
                _, _, trace = SumRateService.run_sum_rate(scenario, mode=mode)
                totals[mode] += trace.final_objective
        self.assertGreaterEqual(totals[Mode.OP], totals[Mode.EP])
        self.assertGreaterEqual(totals[Mode.OP], totals[Mode.SD])

    @tag("slow")
    def test_beats_random_feasible_states(self):
        scenario = toy_scenario(n_antennas=2, n_elements=2, seed=3)
        _, _, trace = SumRateService.run_sum_rate(scenario)
        rng = np.random.default_rng(5)
        best, feasible = -math.inf, 0
        for _ in range(10_000):
            w = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            power = rng.uniform() * scenario.budget_bs
            W = BeamformerSet(w * math.sqrt(power) / np.linalg.norm(w))
            cap = InitService.amplification_cap(scenario, W)
            ris = RisState(
                phi_r=np.exp(2j * np.pi * rng.uniform(size=2)),
                phi_t=np.exp(2j * np.pi * rng.uniform(size=2)),
                amp=rng.uniform(size=2) * cap,
                varsigma=rng.uniform(size=2),
            )
            if not DownlinkService.check_constraints(scenario, ris, W).is_feasible():
                continue
            feasible += 1
            best = max(best, DownlinkService.sum_rate(scenario, ris, W))
        self.assertGreater(feasible, 9000)
        self.assertGreaterEqual(trace.final_objective, best - 1e-6)


class SerializerTests(SimpleTestCase):
    def test_params_overrides(self):
        serializer = SumRateParamsSerializer(data={"max_iter": 5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.save()
        self.assertEqual(params.max_iter, 5)
        self.assertEqual(params.rel_tol, 1e-4)

    def test_params_reject_unknown_and_bad_delta(self):
        self.assertFalse(SumRateParamsSerializer(data={"max_iters": 5}).is_valid())
        self.assertFalse(SumRateParamsSerializer(data={"delta": 1.0}).is_valid())

    def test_pair_limits(self):
        serializer = SumRateParamsSerializer(data={"pair_max_sweeps": 3, "pair_tol": 1e-8})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.save()
        self.assertEqual((params.pair_max_sweeps, params.pair_tol), (3, 1e-8))
        self.assertFalse(SumRateParamsSerializer(data={"pair_max_sweeps": 0}).is_valid())
        self.assertFalse(SumRateParamsSerializer(data={"pair_tol": 0.0}).is_valid())
