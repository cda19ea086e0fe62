import dataclasses
import json

from experiments.management.base import ExperimentCommand
from experiments.services import SolveService
from scenarios.services import ScenarioService


class Command(ExperimentCommand):
    help = "Validate a scenario config and print it resolved over its preset."

    def add_arguments(self, parser):
        parser.add_argument("--config", type=str, default=None)

    def handle(self, *args, **kwargs):
        with self.exit_codes():
            raw = SolveService.resolve_raw_config(kwargs["config"])
            config = ScenarioService.parse_config(raw)

        si = dataclasses.asdict(config)
        si["mode"] = config.mode.value
        self.stdout.write(
            json.dumps(
                {"config": raw, "si": si, "config_sha256": SolveService.config_digest(raw)},
                indent=2,
                sort_keys=True,
            )
        )
