from django.core.management.base import CommandError
from experiments.entities import Problem, TrialStatus
from experiments.management.base import INFEASIBLE, NUMERICAL, ExperimentCommand
from experiments.services import ConvergenceService, SolveService
from scenarios.entities import Mode


class Command(ExperimentCommand):
    help = "Per-iteration objective averaged over seeds, one column per mode."

    def add_arguments(self, parser):
        parser.add_argument("--config", type=str, default=None)
        self.add_problem_argument(parser)
        parser.add_argument(
            "--modes", nargs="+", choices=self.mode_choices(), default=["op", "ep", "sd"]
        )
        self.add_params_argument(parser)
        parser.add_argument("--seeds", type=int, default=10)
        parser.add_argument("--seed", type=int, default=0, help="first seed")
        parser.add_argument("--jobs", type=int, default=1)
        parser.add_argument("--out", type=str, required=True)

    def handle(self, *args, **kwargs):
        if kwargs["seeds"] < 1:
            raise CommandError("--seeds must be at least 1")
        problem = Problem(kwargs["problem"])
        modes = [Mode(mode) for mode in dict.fromkeys(kwargs["modes"])]
        seeds = [kwargs["seed"] + index for index in range(kwargs["seeds"])]

        with self.exit_codes():
            raw = SolveService.resolve_raw_config(kwargs["config"])
            solver = SolveService.read_solver_overrides(kwargs["params"], problem)
            curves, failures = ConvergenceService.run(
                raw, problem, modes, seeds, max(kwargs["jobs"], 1), solver
            )

        if not any(curves.values()):
            statuses = {item["status"] for item in failures}
            code = INFEASIBLE if statuses == {TrialStatus.INFEASIBLE.value} else NUMERICAL
            raise CommandError(
                f"no run finished: {failures[0]['message']}", returncode=code
            )
        if failures:
            self.stderr.write(f"{len(failures)} runs did not finish and were skipped")

        means = ConvergenceService.mean_curves(curves)
        ConvergenceService.write_curves(kwargs["out"], problem, means)
        self.stdout.write(
            f"wrote {len(next(iter(means.values())))} iterations x {len(means)} modes "
            f"to {kwargs['out']}"
        )
