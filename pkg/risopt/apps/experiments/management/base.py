import contextlib
import sys

import numpy as np
from convex.exceptions import QcqpUsageError
from django.core.management.base import BaseCommand, CommandError
from experiments.entities import Problem
from experiments.exceptions import SweepSpecError
from powmin.exceptions import PowerMinInfeasible
from scenarios.entities import Mode
from scenarios.exceptions import DomainError, ScenarioConfigError
from sumrate.exceptions import SubproblemFailure

USAGE = 1
INFEASIBLE = 2
NUMERICAL = 3


class ExperimentCommand(BaseCommand):
    """Argument errors and domain failures leave through CommandError with
    exit code 1 (usage), 2 (infeasible) or 3 (numerical)."""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.called_from_command_line = False
        return parser

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except CommandError as exc:
            self.stderr.write(f"{exc.__class__.__name__}: {exc}")
            sys.exit(exc.returncode)

    @staticmethod
    def add_problem_argument(parser):
        parser.add_argument(
            "--problem",
            choices=[item.value for item in Problem],
            default=Problem.SUMRATE.value,
        )

    @staticmethod
    def add_params_argument(parser):
        parser.add_argument(
            "--params",
            type=str,
            default=None,
            help="JSON file overriding the solver settings",
        )

    @staticmethod
    def mode_choices():
        return [mode.value for mode in Mode]

    @contextlib.contextmanager
    def exit_codes(self):
        try:
            yield
        except (ScenarioConfigError, SweepSpecError, DomainError, QcqpUsageError) as exc:
            raise CommandError(str(exc), returncode=USAGE) from exc
        except PowerMinInfeasible as exc:
            raise CommandError(f"infeasible: {exc}", returncode=INFEASIBLE) from exc
        except (SubproblemFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise CommandError(f"numerical failure: {exc}", returncode=NUMERICAL) from exc
