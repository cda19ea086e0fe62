import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from experiments.entities import Problem, SweepParameter, TrialResult, TrialStatus
from experiments.exceptions import SweepSpecError
from experiments.management.base import ExperimentCommand
from experiments.serializers import SweepSpecSerializer
from experiments.services import (
    ConvergenceService,
    SolveService,
    SweepService,
    run_trial,
)
from powmin.exceptions import PowerMinInfeasible
from scenarios.entities import Mode
from scenarios.exceptions import ScenarioConfigError
from scenarios.services import ScenarioService
from sumrate.exceptions import SubproblemFailure

SMALL = {"preset": "desk", "n_elements": 4, "seed": 1}
RANK_DEFICIENT = {"preset": "desk", "n_antennas": 1, "n_elements": 4, "sinr_target_db": 60.0}


def write_json(directory, name, data):
    path = Path(directory) / name
    with open(path, "w") as file:
        json.dump(data, file)
    return str(path)


def read_csv(path):
    with open(path, newline="") as file:
        return list(csv.reader(file))


def trial(value, mode, status, objective=None, iterations=None, wall=1.0):
    return TrialResult(
        value=value,
        mode=mode,
        trial=0,
        seed=0,
        status=status,
        objective=objective,
        iterations=iterations,
        converged=status == "ok",
        wall_time_s=wall,
        message="",
        curve=[],
    )


class SolveServiceTests(SimpleTestCase):
    def test_digest_ignores_key_order(self):
        self.assertEqual(
            SolveService.config_digest({"a": 1, "b": [1, 2]}),
            SolveService.config_digest({"b": [1, 2], "a": 1}),
        )
        self.assertNotEqual(
            SolveService.config_digest({"a": 1}), SolveService.config_digest({"a": 2})
        )

    def test_overrides_land_in_resolved_config(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_json(directory, "config.json", SMALL)
            raw = SolveService.resolve_raw_config(path, mode="sd", seed=9)
        self.assertEqual((raw["mode"], raw["seed"], raw["n_elements"]), ("sd", 9, 4))
        self.assertEqual(raw["preset"], "desk")
        self.assertEqual(raw["n_antennas"], 4)

    def test_version_is_never_empty(self):
        self.assertTrue(SolveService.version())

    def test_power_min_skips_budget_checks(self):
        self.assertEqual(
            SolveService.feasibility_options(Problem.POWMIN),
            {"check_bs": False, "check_ris": False},
        )
        self.assertEqual(SolveService.feasibility_options(Problem.SUMRATE), {})

    def test_rank_deficient_trial_is_infeasible(self):
        raw = ScenarioService.resolve_config_data(RANK_DEFICIENT)
        result = run_trial(("powmin", "op", 60.0, 0, raw, {}))
        self.assertEqual(result["status"], TrialStatus.INFEASIBLE.value)
        self.assertIsNone(result["objective"])
        self.assertGreaterEqual(result["wall_time_s"], 0.0)

    def test_solver_params_take_settings_defaults(self):
        params = SolveService.solver_params(Problem.POWMIN)
        self.assertEqual(params.pair_tol, 1e-6)
        params = SolveService.solver_params(Problem.SUMRATE, {"max_iter": 3})
        self.assertEqual(params.max_iter, 3)

    def test_solver_params_reject_unknown_keys(self):
        with self.assertRaises(ScenarioConfigError) as context:
            SolveService.solver_params(Problem.SUMRATE, {"max_iters": 3})
        self.assertIn("max_iters", context.exception.errors)
        with self.assertRaises(ScenarioConfigError):
            SolveService.solver_params(Problem.POWMIN, {"alpha": 1.5})

    def test_overrides_reach_the_solver(self):
        scenario = ScenarioService.build_scenario(ScenarioService.parse_config(SMALL))
        outcome = SolveService.solve(scenario, Problem.SUMRATE, overrides={"max_iter": 1})
        self.assertLessEqual(outcome.trace.iterations, 1)


class SweepSpecTests(SimpleTestCase):
    def test_integer_parameters_need_whole_values(self):
        serializer = SweepSpecSerializer(
            data={"parameter": "M", "values": [4, 8.5], "trials": 1, "problem": "sumrate"}
        )
        self.assertFalse(serializer.is_valid())
        self.assertIn("values", serializer.errors)

    def test_modes_default_and_distinct(self):
        serializer = SweepSpecSerializer(
            data={"parameter": "P_T", "values": [4], "trials": 2, "problem": "powmin"}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        spec = serializer.save()
        self.assertEqual(spec.modes, (Mode.OP,))
        self.assertEqual(spec.parameter, SweepParameter.BUDGET_BS)
        serializer = SweepSpecSerializer(
            data={
                "parameter": "P_T",
                "values": [4],
                "trials": 2,
                "problem": "powmin",
                "modes": ["op", "op"],
            }
        )
        self.assertFalse(serializer.is_valid())

    def test_load_spec_resolves_preset_names_and_paths(self):
        with tempfile.TemporaryDirectory() as directory:
            write_json(directory, "small.json", SMALL)
            by_path = write_json(
                directory,
                "by_path.json",
                {"parameter": "M", "values": [2, 4], "trials": 1, "problem": "sumrate",
                 "config": "small.json"},
            )
            by_name = write_json(
                directory,
                "by_name.json",
                {"parameter": "K_r", "values": [0, 2], "trials": 3, "problem": "sumrate",
                 "config": "desk", "seed": 5},
            )
            spec = SweepService.load_spec(by_path)
            self.assertEqual(spec.values, (2, 4))
            self.assertEqual(spec.base_config["seed"], 1)
            self.assertEqual(spec.source, by_path)

            spec = SweepService.load_spec(by_name)
            config = SweepService.trial_config(spec, 2, Mode.EP, 2)
            self.assertEqual(config["n_users_reflect"], 2)
            self.assertEqual((config["mode"], config["seed"]), ("ep", 7))
            self.assertEqual(len(SweepService.tasks(spec)), 2 * 3)

    def test_out_of_range_value_rejected_before_running(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_json(
                directory,
                "spec.json",
                {"parameter": "K_r", "values": [1, 3], "trials": 1, "problem": "sumrate",
                 "config": "desk"},
            )
            with self.assertRaises(ScenarioConfigError):
                SweepService.load_spec(path)

    def test_unknown_field_rejected(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_json(
                directory,
                "spec.json",
                {"parameter": "P_T", "values": [1], "trials": 1, "problem": "sumrate",
                 "trial": 3},
            )
            with self.assertRaises(SweepSpecError) as context:
                SweepService.load_spec(path)
            self.assertIn("trial", context.exception.errors)

    def test_solver_overrides_travel_with_every_task(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_json(
                directory,
                "spec.json",
                {"parameter": "P_T", "values": [4, 8], "trials": 2, "problem": "sumrate",
                 "config": "desk", "solver": {"max_iter": 2}},
            )
            spec = SweepService.load_spec(path)
        self.assertEqual(spec.solver, {"max_iter": 2})
        self.assertTrue(all(task[-1] == {"max_iter": 2} for task in SweepService.tasks(spec)))

    def test_bad_solver_overrides_rejected_before_running(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_json(
                directory,
                "spec.json",
                {"parameter": "gamma", "values": [4], "trials": 1, "problem": "powmin",
                 "config": "desk", "solver": {"epsilon": -1.0}},
            )
            with self.assertRaises(SweepSpecError) as context:
                SweepService.load_spec(path)
        self.assertIn("epsilon", context.exception.errors)


class AggregateTests(SimpleTestCase):
    def test_mean_and_standard_error_skip_failures(self):
        spec = SweepSpecSerializer(
            data={"parameter": "P_T", "values": [4, 8], "trials": 3, "problem": "sumrate"}
        )
        spec.is_valid(raise_exception=True)
        spec = spec.save()
        results = [
            trial(4.0, "op", "ok", 1.0, 10),
            trial(4.0, "op", "ok", 3.0, 20),
            trial(4.0, "op", "failed"),
            trial(8.0, "op", "infeasible"),
        ]
        first, second = SweepService.aggregate(spec, results)
        self.assertEqual((first["trials"], first["failures"]), (3, 1))
        self.assertAlmostEqual(first["mean_objective"], 2.0)
        self.assertAlmostEqual(first["std_error"], 1.0)
        self.assertAlmostEqual(first["mean_iterations"], 15.0)
        self.assertEqual(second["failures"], 1)
        self.assertTrue(math.isnan(second["mean_objective"]))

    def test_mean_curves_carry_last_value(self):
        means = ConvergenceService.mean_curves({"op": [[1.0, 2.0], [3.0]], "ep": []})
        self.assertEqual(means["op"].tolist(), [2.0, 2.5])
        self.assertTrue(all(math.isnan(value) for value in means["ep"]))

    def test_curve_file_layout(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "nested" / "curves.csv"
            means = ConvergenceService.mean_curves({"op": [[1.0, 2.0]], "sd": [[0.5, 0.5]]})
            ConvergenceService.write_curves(path, Problem.POWMIN, means)
            rows = read_csv(path)
        self.assertEqual(rows[0], ["iteration", "op_total_power_w", "sd_total_power_w"])
        self.assertEqual(rows[1][0], "1")
        self.assertEqual(len(rows), 3)


class ExitCodeTests(SimpleTestCase):
    def raised(self, error):
        command = ExperimentCommand()
        with self.assertRaises(CommandError) as context:
            with command.exit_codes():
                raise error
        return context.exception.returncode

    def test_mapping(self):
        self.assertEqual(self.raised(ScenarioConfigError("bad")), 1)
        self.assertEqual(self.raised(SweepSpecError("bad")), 1)
        self.assertEqual(self.raised(PowerMinInfeasible("no")), 2)
        self.assertEqual(self.raised(SubproblemFailure("nan")), 3)
        self.assertEqual(self.raised(FloatingPointError("overflow")), 3)


class SolveCommandTests(SimpleTestCase):
    def run_solve(self, *args):
        stdout, stderr = StringIO(), StringIO()
        call_command("solve", *args, stdout=stdout, stderr=stderr)
        return stdout.getvalue(), stderr.getvalue()

    def test_sum_rate_artifacts(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", SMALL)
            out = Path(directory) / "run"
            stdout, _ = self.run_solve("--config", config, "--mode", "ep", "--out", str(out))
            self.assertIn("sumrate/ep", stdout)
            for name in (
                "trace.csv",
                "trace.json",
                "state.json",
                "constraints.json",
                "channels.json",
                "manifest.json",
            ):
                self.assertTrue((out / name).exists(), name)

            rows = read_csv(out / "trace.csv")
            self.assertEqual(rows[0], ["iteration", "sum_rate_bit_per_s_hz"])
            self.assertEqual(rows[1][0], "0")
            with open(out / "manifest.json") as file:
                manifest = json.load(file)
            raw = SolveService.resolve_raw_config(config, mode="ep")
            self.assertEqual(manifest["config_sha256"], SolveService.config_digest(raw))
            self.assertEqual((manifest["mode"], manifest["seed"]), ("ep", 1))
            with open(out / "constraints.json") as file:
                self.assertTrue(json.load(file)["feasible"])

            # same channels from the dump reproduce the run
            again = Path(directory) / "again"
            self.run_solve(
                "--config",
                config,
                "--mode",
                "ep",
                "--channels",
                str(out / "channels.json"),
                "--out",
                str(again),
            )
            with open(out / "trace.json") as first, open(again / "trace.json") as second:
                self.assertAlmostEqual(
                    json.load(first)["records"][-1]["objective"],
                    json.load(second)["records"][-1]["objective"],
                )

    def test_malformed_config_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as directory:
            config = Path(directory) / "broken.json"
            config.write_text("{\"preset\": ")
            out = Path(directory) / "run"
            with self.assertRaises(CommandError) as context:
                self.run_solve("--config", str(config), "--out", str(out))
            self.assertEqual(context.exception.returncode, 1)
            self.assertFalse(out.exists())

    def test_params_file_overrides_solver_settings(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", SMALL)
            params = write_json(directory, "params.json", {"max_iter": 1})
            out = Path(directory) / "run"
            self.run_solve("--config", config, "--params", params, "--out", str(out))
            with open(out / "manifest.json") as file:
                manifest = json.load(file)
        self.assertEqual(manifest["solver"], {"max_iter": 1})
        self.assertLessEqual(manifest["iterations"], 1)

    def test_bad_params_file_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", SMALL)
            params = write_json(directory, "params.json", {"rel_tol": 0.0})
            out = Path(directory) / "run"
            with self.assertRaises(CommandError) as context:
                self.run_solve("--config", config, "--params", params, "--out", str(out))
            self.assertEqual(context.exception.returncode, 1)
            self.assertFalse(out.exists())

    def test_invalid_value_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", {"preset": "desk", "n_users": 0})
            with self.assertRaises(CommandError) as context:
                self.run_solve("--config", config, "--out", str(Path(directory) / "run"))
            self.assertEqual(context.exception.returncode, 1)

    def test_rank_deficient_power_min_exits_infeasible(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", RANK_DEFICIENT)
            out = Path(directory) / "run"
            stderr = StringIO()
            with self.assertRaises(CommandError) as context:
                call_command(
                    "solve",
                    "--config",
                    config,
                    "--problem",
                    "powmin",
                    "--out",
                    str(out),
                    stdout=StringIO(),
                    stderr=stderr,
                )
            self.assertEqual(context.exception.returncode, 2)
            with open(out / "infeasibility.json") as file:
                report = json.load(file)
            self.assertEqual(report["kind"], "InfeasibleStart")
            self.assertFalse(report["report"]["full_rank"])
            self.assertIn("full_rank", stderr.getvalue())
            self.assertTrue((out / "manifest.json").exists())
            self.assertTrue((out / "channels.json").exists())


class ValidateConfigCommandTests(SimpleTestCase):
    def test_prints_resolved_config(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", SMALL)
            stdout = StringIO()
            call_command("validate_config", "--config", config, stdout=stdout)
        data = json.loads(stdout.getvalue())
        self.assertEqual(data["si"]["n_elements"], 4)
        self.assertEqual(data["si"]["mode"], "op")
        self.assertEqual(data["config_sha256"], SolveService.config_digest(data["config"]))

    def test_unknown_key_is_usage_error(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", {"preset": "desk", "n_antenna": 3})
            with self.assertRaises(CommandError) as context:
                call_command("validate_config", "--config", config, stdout=StringIO())
        self.assertEqual(context.exception.returncode, 1)


class SweepCommandTests(SimpleTestCase):
    def test_small_sweep_writes_tables(self):
        with tempfile.TemporaryDirectory() as directory:
            spec = write_json(
                directory,
                "spec.json",
                {"parameter": "P_T", "values": [10, 16], "trials": 1, "problem": "sumrate",
                 "modes": ["ep"], "config": dict(SMALL)},
            )
            out = Path(directory) / "sweep"
            call_command(
                "sweep", "--spec", spec, "--out", str(out), stdout=StringIO(), stderr=StringIO()
            )
            aggregate = read_csv(out / "aggregate.csv")
            trials = read_csv(out / "trials.csv")
            timings = read_csv(out / "aggregate_timings.csv")
        self.assertEqual(aggregate[0][:2], ["P_T_dbm", "mode"])
        self.assertIn("mean_sum_rate_bit_per_s_hz", aggregate[0])
        self.assertEqual(len(aggregate), 3)
        self.assertEqual(len(trials), 3)
        self.assertTrue(all(row[4] == "ok" for row in trials[1:]))
        self.assertNotIn("mean_wall_time_s", aggregate[0])
        self.assertIn("mean_wall_time_s", timings[0])

    def test_bad_spec_is_usage_error(self):
        with tempfile.TemporaryDirectory() as directory:
            spec = write_json(directory, "spec.json", {"parameter": "Q", "values": [1]})
            with self.assertRaises(CommandError) as context:
                call_command(
                    "sweep", "--spec", spec, "--out", str(Path(directory) / "sweep"),
                    stdout=StringIO(),
                )
        self.assertEqual(context.exception.returncode, 1)

    def sweep_means(self, parameter, values, problem, trials=50):
        with tempfile.TemporaryDirectory() as directory:
            spec = write_json(
                directory,
                "spec.json",
                {"parameter": parameter, "values": values, "trials": trials,
                 "problem": problem, "config": "desk"},
            )
            out = Path(directory) / "sweep"
            call_command(
                "sweep", "--spec", spec, "--out", str(out), "--jobs", "4",
                stdout=StringIO(), stderr=StringIO(),
            )
            rows = read_csv(out / "aggregate.csv")
        return [float(row[4]) for row in rows[1:]]

    @tag("slow")
    def test_sum_rate_grows_with_transmit_power(self):
        means = self.sweep_means("P_T", [4, 8, 12, 16], "sumrate")
        self.assertTrue(all(a < b for a, b in zip(means, means[1:])), means)

    @tag("slow")
    def test_sum_rate_grows_with_elements(self):
        means = self.sweep_means("M", [8, 16, 32], "sumrate")
        self.assertTrue(all(a < b for a, b in zip(means, means[1:])), means)

    @tag("slow")
    def test_power_grows_with_sinr_target(self):
        means = self.sweep_means("gamma", [4, 8, 12], "powmin")
        self.assertTrue(all(a < b for a, b in zip(means, means[1:])), means)


class ConvergenceCommandTests(SimpleTestCase):
    def test_curves_per_mode(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", SMALL)
            out = Path(directory) / "curves.csv"
            call_command(
                "convergence", "--config", config, "--modes", "op", "ep", "--seeds", "2",
                "--out", str(out), stdout=StringIO(), stderr=StringIO(),
            )
            rows = read_csv(out)
        self.assertEqual(
            rows[0], ["iteration", "op_sum_rate_bit_per_s_hz", "ep_sum_rate_bit_per_s_hz"]
        )
        self.assertEqual(rows[1][0], "1")
        self.assertGreater(len(rows), 1)

    def test_all_runs_infeasible(self):
        with tempfile.TemporaryDirectory() as directory:
            config = write_json(directory, "config.json", RANK_DEFICIENT)
            out = Path(directory) / "curves.csv"
            with self.assertRaises(CommandError) as context:
                call_command(
                    "convergence", "--config", config, "--problem", "powmin",
                    "--modes", "op", "--seeds", "2", "--out", str(out),
                    stdout=StringIO(), stderr=StringIO(),
                )
            self.assertEqual(context.exception.returncode, 2)
            self.assertFalse(out.exists())
