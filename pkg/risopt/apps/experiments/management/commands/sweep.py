from experiments.management.base import ExperimentCommand
from experiments.services import SweepService


class Command(ExperimentCommand):
    help = "Monte-Carlo sweep of one scenario parameter; writes aggregate and per-trial CSVs."

    def add_arguments(self, parser):
        parser.add_argument("--spec", type=str, required=True)
        parser.add_argument("--out", type=str, required=True)
        parser.add_argument("--jobs", type=int, default=1)

    def handle(self, *args, **kwargs):
        with self.exit_codes():
            spec = SweepService.load_spec(kwargs["spec"])
            results = SweepService.run_sweep(spec, max(kwargs["jobs"], 1))
            rows = SweepService.aggregate(spec, results)
            files = SweepService.write_sweep(kwargs["out"], spec, results, rows)

        failures = sum(row["failures"] for row in rows)
        if failures:
            self.stderr.write(f"{failures} of {len(results)} trials did not finish")
        self.stdout.write(f"wrote {', '.join(files)} to {kwargs['out']}")
