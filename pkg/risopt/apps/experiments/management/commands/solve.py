import json
from pathlib import Path

from django.core.management.base import CommandError
from experiments.entities import Problem
from experiments.management.base import INFEASIBLE, NUMERICAL, ExperimentCommand
from experiments.services import SolveService
from powmin.exceptions import PowerMinInfeasible
from scenarios.services import ScenarioService
from sumrate.exceptions import SubproblemFailure


class Command(ExperimentCommand):
    help = "Run one sum-rate or power-minimization solve and write its artifacts."

    def add_arguments(self, parser):
        parser.add_argument("--config", type=str, default=None)
        parser.add_argument("--channels", type=str, default=None)
        self.add_problem_argument(parser)
        parser.add_argument("--mode", choices=self.mode_choices(), default=None)
        self.add_params_argument(parser)
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--out", type=str, required=True)

    def handle(self, *args, **kwargs):
        problem = Problem(kwargs["problem"])
        out = Path(kwargs["out"])

        with self.exit_codes():
            raw = SolveService.resolve_raw_config(
                kwargs["config"], mode=kwargs["mode"], seed=kwargs["seed"]
            )
            solver = SolveService.read_solver_overrides(kwargs["params"], problem)
            config = ScenarioService.parse_config(raw)
            if kwargs["channels"]:
                dump = ScenarioService.read_config_file(kwargs["channels"])
                scenario = ScenarioService.load_channels(config, dump)
            else:
                scenario = ScenarioService.build_scenario(config)

            try:
                outcome = SolveService.solve(scenario, problem, overrides=solver)
            except PowerMinInfeasible as exc:
                SolveService.write_failure(
                    out, scenario, raw, problem, exc, solver=solver
                )
                report = SolveService.infeasibility_report(exc)
                self.stderr.write(json.dumps(report, indent=2, sort_keys=True))
                raise CommandError(f"infeasible: {exc}", returncode=INFEASIBLE)
            except SubproblemFailure as exc:
                SolveService.write_failure(
                    out, scenario, raw, problem, exc, solver=solver
                )
                raise CommandError(f"numerical failure: {exc}", returncode=NUMERICAL)

            files = SolveService.write_outputs(out, outcome, raw, solver=solver)

        if not outcome.trace.converged:
            self.stderr.write(
                f"warning: stopped at the iteration cap ({outcome.trace.iterations})"
            )
        self.stdout.write(
            f"{problem.value}/{outcome.mode.value}: objective "
            f"{outcome.trace.final_objective:.6g} after {outcome.trace.iterations} "
            f"iterations; wrote {', '.join(files)} to {out}"
        )
