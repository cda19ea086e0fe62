import csv
import hashlib
import json
import logging
import math
import multiprocessing
import os
import subprocess
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import django
import numpy as np
import risopt
from django.conf import settings
from downlink.serializers import (
    ConstraintReportSerializer,
    SolveTraceSerializer,
    StateSerializer,
)
from downlink.services import DownlinkService
from experiments.entities import (
    AggregateRow,
    Problem,
    SolveOutcome,
    SweepSpec,
    TrialResult,
    TrialStatus,
)
from experiments.exceptions import SweepSpecError
from experiments.serializers import ManifestSerializer, SweepSpecSerializer
from powmin.entities import FeasibilityReport, PowMinParams
from powmin.exceptions import PowerMinInfeasible
from powmin.serializers import FeasibilityReportSerializer, PowMinParamsSerializer
from powmin.services import PowerMinService
from rest_framework import serializers
from scenarios.entities import Mode, Scenario
from scenarios.exceptions import ScenarioConfigError
from scenarios.presets import PRESETS
from scenarios.services import ScenarioService
from sumrate.entities import SumRateParams
from sumrate.exceptions import SubproblemFailure
from sumrate.serializers import SumRateParamsSerializer
from sumrate.services import SumRateService

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

OBJECTIVE_UNITS = {
    Problem.SUMRATE: ("sum_rate", "bit_per_s_hz"),
    Problem.POWMIN: ("total_power", "w"),
}


def _write_json(path: Path, data) -> None:
    with open(path, "w") as file:
        json.dump(data, file, indent=2, sort_keys=True)
        file.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(header)
        writer.writerows(rows)


def _setup_worker() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "risopt.settings")
    django.setup()


class SolveService:
    """Single solves and their on-disk artifacts."""

    @classmethod
    def resolve_raw_config(
        cls,
        path: Optional[PathLike] = None,
        mode: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> Dict:
        raw = ScenarioService.read_config_file(path)
        if not isinstance(raw, dict):
            raise ScenarioConfigError("config must be a JSON object")
        if mode is not None:
            raw["mode"] = mode
        if seed is not None:
            raw["seed"] = seed
        return ScenarioService.resolve_config_data(raw)

    @classmethod
    def config_digest(cls, raw: Dict) -> str:
        canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def version(cls) -> str:
        try:
            described = subprocess.run(
                ["git", "describe", "--always", "--dirty", "--tags"],
                cwd=settings.BASE_DIR,
                capture_output=True,
                text=True,
                timeout=5,
                check=True,
            ).stdout.strip()
        except (OSError, subprocess.SubprocessError):
            described = ""
        return described or risopt.__version__

    @classmethod
    def solver_params(
        cls, problem: Problem, overrides: Optional[Dict] = None
    ) -> Union[SumRateParams, PowMinParams]:
        """Settings defaults for the problem's solver, with validated overrides."""
        if Problem(problem) == Problem.SUMRATE:
            serializer = SumRateParamsSerializer(data=overrides or {})
        else:
            serializer = PowMinParamsSerializer(data=overrides or {})
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as exc:
            raise ScenarioConfigError(
                f"invalid solver parameters: {exc.detail}", exc.detail
            ) from exc
        return serializer.save()

    @classmethod
    def read_solver_overrides(cls, path: Optional[PathLike], problem: Problem) -> Dict:
        overrides = ScenarioService.read_config_file(path)
        if not isinstance(overrides, dict):
            raise ScenarioConfigError("solver parameters must be a JSON object")
        cls.solver_params(problem, overrides)
        return overrides

    @classmethod
    def solve(
        cls,
        scenario: Scenario,
        problem: Problem,
        mode: Optional[Mode] = None,
        sumrate_params: Optional[SumRateParams] = None,
        powmin_params: Optional[PowMinParams] = None,
        overrides: Optional[Dict] = None,
    ) -> SolveOutcome:
        problem = Problem(problem)
        mode = Mode(mode or scenario.mode)
        if problem == Problem.SUMRATE:
            ris, W, trace = SumRateService.run_sum_rate(
                scenario, sumrate_params or cls.solver_params(problem, overrides), mode
            )
            targets = None
        else:
            targets = scenario.sinr_targets
            ris, W, trace = PowerMinService.run_power_min(
                scenario,
                targets,
                powmin_params or cls.solver_params(problem, overrides),
                mode,
            )
        return SolveOutcome(
            scenario=scenario,
            problem=problem,
            mode=mode,
            ris=ris,
            beamformers=W,
            trace=trace,
            report=DownlinkService.check_constraints(scenario, ris, W, targets),
        )

    @classmethod
    def feasibility_options(cls, problem: Problem) -> Dict:
        if problem == Problem.POWMIN:
            return {"check_bs": False, "check_ris": False}
        return {}

    @classmethod
    def trace_table(cls, trace, problem: Problem) -> Tuple[List[str], List[List]]:
        if Problem(problem) == Problem.SUMRATE:
            header = ["iteration", "sum_rate_bit_per_s_hz"]
            rows = [[record["iteration"], record["objective"]] for record in trace.records]
        else:
            header = ["iteration", "total_power_w", "min_sinr_ratio"]
            rows = [
                [record["iteration"], record["total_power_w"], record["min_sinr_ratio"]]
                for record in trace.records
            ]
        return header, rows

    @classmethod
    def manifest(
        cls,
        raw: Dict,
        problem: Problem,
        files: List[str],
        trace=None,
        command: str = "solve",
        solver: Optional[Dict] = None,
    ) -> Dict:
        data = {
            "command": command,
            "problem": Problem(problem).value,
            "mode": raw["mode"],
            "seed": raw["seed"],
            "config_sha256": cls.config_digest(raw),
            "version": cls.version(),
            "files": files,
        }
        if trace is not None:
            data.update(converged=trace.converged, iterations=trace.iterations)
        if solver:
            data["solver"] = dict(solver)
        return dict(ManifestSerializer(data).data)

    @classmethod
    def write_outputs(
        cls,
        out_dir: PathLike,
        outcome: SolveOutcome,
        raw: Dict,
        solver: Optional[Dict] = None,
    ) -> List[str]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        header, rows = cls.trace_table(outcome.trace, outcome.problem)
        _write_csv(out / "trace.csv", header, rows)
        _write_json(out / "trace.json", SolveTraceSerializer(outcome.trace).data)
        _write_json(
            out / "state.json",
            StateSerializer({"ris": outcome.ris, "beamformers": outcome.beamformers}).data,
        )
        _write_json(
            out / "constraints.json",
            ConstraintReportSerializer(
                outcome.report,
                context={"feasibility": cls.feasibility_options(outcome.problem)},
            ).data,
        )
        _write_json(out / "channels.json", ScenarioService.dump_channels(outcome.scenario))
        files = [
            "trace.csv",
            "trace.json",
            "state.json",
            "constraints.json",
            "channels.json",
        ]
        _write_json(
            out / "manifest.json",
            cls.manifest(raw, outcome.problem, files, outcome.trace, solver=solver),
        )
        logger.info("wrote %d artifacts to %s", len(files) + 1, out)
        return files + ["manifest.json"]

    @classmethod
    def infeasibility_report(cls, exc: PowerMinInfeasible) -> Dict:
        if isinstance(exc.report, FeasibilityReport):
            report = dict(FeasibilityReportSerializer(exc.report).data)
        elif exc.report is not None:
            report = dict(
                ConstraintReportSerializer(
                    exc.report,
                    context={"feasibility": cls.feasibility_options(Problem.POWMIN)},
                ).data
            )
        else:
            report = {}
        return {"reason": str(exc), "kind": exc.__class__.__name__, "report": report}

    @classmethod
    def write_failure(
        cls,
        out_dir: PathLike,
        scenario: Scenario,
        raw: Dict,
        problem: Problem,
        exc: Exception,
        solver: Optional[Dict] = None,
    ) -> List[str]:
        """Artifacts of a run that stopped early: channels, partial trace and
        the reason (with the infeasibility report when there is one)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = ["channels.json"]
        _write_json(out / "channels.json", ScenarioService.dump_channels(scenario))

        trace = getattr(exc, "trace", None)
        if trace is not None and trace.records:
            header, rows = cls.trace_table(trace, problem)
            _write_csv(out / "trace.csv", header, rows)
            files.append("trace.csv")
        if isinstance(exc, PowerMinInfeasible):
            _write_json(out / "infeasibility.json", cls.infeasibility_report(exc))
            files.append("infeasibility.json")
        else:
            _write_json(
                out / "failure.json",
                {"reason": str(exc), "kind": exc.__class__.__name__},
            )
            files.append("failure.json")
        _write_json(
            out / "manifest.json", cls.manifest(raw, problem, files, trace, solver=solver)
        )
        return files + ["manifest.json"]


def run_trial(task) -> TrialResult:
    """One sweep or convergence trial; module-level so worker pools can
    pickle it."""
    problem, mode, value, trial, raw, solver = task
    started = time.perf_counter()
    result = TrialResult(
        value=value,
        mode=mode,
        trial=trial,
        seed=raw["seed"],
        status=TrialStatus.OK.value,
        objective=None,
        iterations=None,
        converged=False,
        wall_time_s=0.0,
        message="",
        curve=[],
    )
    try:
        scenario = ScenarioService.build_scenario(ScenarioService.parse_config(raw))
        outcome = SolveService.solve(
            scenario, Problem(problem), Mode(mode), overrides=solver
        )
        result.update(
            objective=float(outcome.trace.final_objective),
            iterations=outcome.trace.iterations,
            converged=outcome.trace.converged,
        )
        result["curve"] = [float(item) for item in outcome.trace.objectives]
    except PowerMinInfeasible as exc:
        result.update(status=TrialStatus.INFEASIBLE.value, message=str(exc))
    except (
        SubproblemFailure,
        ScenarioConfigError,
        ArithmeticError,
        np.linalg.LinAlgError,
    ) as exc:
        logger.warning("trial %s/%s seed %d failed: %s", mode, value, raw["seed"], exc)
        result.update(status=TrialStatus.FAILED.value, message=str(exc))
    result["wall_time_s"] = time.perf_counter() - started
    return result


def _map(tasks: List, jobs: int) -> List[TrialResult]:
    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.Pool(min(jobs, len(tasks)), initializer=_setup_worker) as pool:
            return pool.map(run_trial, tasks, chunksize=1)
    return [run_trial(task) for task in tasks]


class SweepService:
    @classmethod
    def load_spec(cls, path: PathLike) -> SweepSpec:
        path = Path(path)
        try:
            with open(path) as file:
                data = json.load(file)
        except OSError as exc:
            raise SweepSpecError(f"cannot read sweep spec {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SweepSpecError(f"malformed JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise SweepSpecError("sweep spec must be a JSON object")

        config = data.get("config")
        if isinstance(config, str):
            if config in PRESETS:
                data["config"] = {"preset": config}
            else:
                data["config"] = ScenarioService.read_config_file(path.parent / config)

        serializer = SweepSpecSerializer(data=data, context={"source": str(path)})
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as exc:
            raise SweepSpecError(f"invalid sweep spec: {exc.detail}", exc.detail) from exc
        spec = serializer.save()
        try:
            SolveService.solver_params(spec.problem, spec.solver)
        except ScenarioConfigError as exc:
            raise SweepSpecError(str(exc), exc.errors) from exc
        for value in spec.values:
            ScenarioService.parse_config(cls.trial_config(spec, value, spec.modes[0], 0))
        return spec

    @classmethod
    def trial_config(cls, spec: SweepSpec, value, mode: Mode, trial: int) -> Dict:
        raw = ScenarioService.resolve_config_data(spec.base_config)
        raw[spec.parameter.config_key] = value
        raw["mode"] = Mode(mode).value
        raw["seed"] = spec.base_seed + trial
        return raw

    @classmethod
    def tasks(cls, spec: SweepSpec) -> List:
        return [
            (
                spec.problem.value,
                mode.value,
                value,
                trial,
                cls.trial_config(spec, value, mode, trial),
                spec.solver,
            )
            for value in spec.values
            for mode in spec.modes
            for trial in range(spec.trials)
        ]

    @classmethod
    def run_sweep(cls, spec: SweepSpec, jobs: int = 1) -> List[TrialResult]:
        tasks = cls.tasks(spec)
        logger.info(
            "sweep over %s: %d trials on %d worker(s)",
            spec.parameter.value,
            len(tasks),
            max(jobs, 1),
        )
        return _map(tasks, jobs)

    @classmethod
    def aggregate(cls, spec: SweepSpec, results: List[TrialResult]) -> List[AggregateRow]:
        rows = []
        for value in spec.values:
            for mode in spec.modes:
                group = [
                    item
                    for item in results
                    if item["value"] == value and item["mode"] == mode.value
                ]
                done = [item for item in group if item["status"] == TrialStatus.OK.value]
                objectives = np.array([item["objective"] for item in done], dtype=float)
                count = objectives.size
                rows.append(
                    AggregateRow(
                        value=value,
                        mode=mode.value,
                        trials=len(group),
                        failures=len(group) - count,
                        mean_objective=float(objectives.mean()) if count else math.nan,
                        std_error=float(objectives.std(ddof=1) / math.sqrt(count))
                        if count > 1
                        else (0.0 if count else math.nan),
                        mean_iterations=float(
                            np.mean([item["iterations"] for item in done])
                        )
                        if count
                        else math.nan,
                        mean_wall_time_s=float(
                            np.mean([item["wall_time_s"] for item in group])
                        )
                        if group
                        else math.nan,
                    )
                )
        return rows

    @classmethod
    def write_sweep(
        cls,
        out_dir: PathLike,
        spec: SweepSpec,
        results: List[TrialResult],
        rows: List[AggregateRow],
    ) -> List[str]:
        """Data CSVs carry no wall-clock columns; timings go to the
        companion ``*_timings.csv`` files."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        value_column = f"{spec.parameter.value}_{spec.parameter.unit}"
        name, unit = OBJECTIVE_UNITS[spec.problem]

        _write_csv(
            out / "aggregate.csv",
            [
                value_column,
                "mode",
                "trials",
                "failures",
                f"mean_{name}_{unit}",
                f"std_error_{unit}",
                "mean_iterations",
            ],
            [
                [
                    row["value"],
                    row["mode"],
                    row["trials"],
                    row["failures"],
                    row["mean_objective"],
                    row["std_error"],
                    row["mean_iterations"],
                ]
                for row in rows
            ],
        )
        _write_csv(
            out / "aggregate_timings.csv",
            [value_column, "mode", "mean_wall_time_s"],
            [[row["value"], row["mode"], row["mean_wall_time_s"]] for row in rows],
        )
        _write_csv(
            out / "trials.csv",
            [
                value_column,
                "mode",
                "trial",
                "seed",
                "status",
                f"{name}_{unit}",
                "iterations",
                "converged",
                "message",
            ],
            [
                [
                    item["value"],
                    item["mode"],
                    item["trial"],
                    item["seed"],
                    item["status"],
                    "" if item["objective"] is None else item["objective"],
                    "" if item["iterations"] is None else item["iterations"],
                    int(item["converged"]),
                    item["message"],
                ]
                for item in results
            ],
        )
        _write_csv(
            out / "trials_timings.csv",
            [value_column, "mode", "trial", "wall_time_s"],
            [
                [item["value"], item["mode"], item["trial"], item["wall_time_s"]]
                for item in results
            ],
        )
        return ["aggregate.csv", "aggregate_timings.csv", "trials.csv", "trials_timings.csv"]


class ConvergenceService:
    @classmethod
    def tasks(
        cls,
        raw: Dict,
        problem: Problem,
        modes: Sequence[Mode],
        seeds: Sequence[int],
        solver: Optional[Dict] = None,
    ) -> List:
        tasks = []
        for mode in modes:
            for index, seed in enumerate(seeds):
                config = dict(raw, mode=Mode(mode).value, seed=seed)
                tasks.append(
                    (
                        Problem(problem).value,
                        Mode(mode).value,
                        seed,
                        index,
                        config,
                        dict(solver or {}),
                    )
                )
        return tasks

    @classmethod
    def run(
        cls,
        raw: Dict,
        problem: Problem,
        modes: Sequence[Mode],
        seeds: Sequence[int],
        jobs: int = 1,
        solver: Optional[Dict] = None,
    ) -> Tuple[Dict[str, List[List[float]]], List[TrialResult]]:
        """Per-mode objective curves (iterations 1..T of each run) and the
        trials that did not finish."""
        curves: Dict[str, List[List[float]]] = {Mode(mode).value: [] for mode in modes}
        failures = []
        for result in _map(cls.tasks(raw, problem, modes, seeds, solver), jobs):
            if result["status"] != TrialStatus.OK.value:
                failures.append(result)
                continue
            curve = result["curve"]
            curves[result["mode"]].append(curve[1:] if len(curve) > 1 else curve)
        return curves, failures

    @classmethod
    def mean_curves(cls, curves: Dict[str, List[List[float]]]) -> Dict[str, np.ndarray]:
        """Average over seeds; shorter runs carry their final value forward."""
        length = max(
            (len(curve) for runs in curves.values() for curve in runs), default=0
        )
        means = {}
        for mode, runs in curves.items():
            if not runs:
                means[mode] = np.full(length, math.nan)
                continue
            padded = np.array(
                [curve + [curve[-1]] * (length - len(curve)) for curve in runs],
                dtype=float,
            )
            means[mode] = padded.mean(axis=0)
        return means

    @classmethod
    def write_curves(
        cls, path: PathLike, problem: Problem, means: Dict[str, np.ndarray]
    ) -> None:
        name, unit = OBJECTIVE_UNITS[Problem(problem)]
        modes = list(means)
        length = max((values.size for values in means.values()), default=0)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(
            path,
            ["iteration"] + [f"{mode}_{name}_{unit}" for mode in modes],
            [
                [iteration + 1] + [float(means[mode][iteration]) for mode in modes]
                for iteration in range(length)
            ],
        )
