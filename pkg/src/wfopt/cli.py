"""Command-line entry point.

Subcommands:
    optimize     run the loop in infer mode (1 candidate per iteration)
    collect      run the loop in collect mode (best-of-m, trajectory export)
    export-rlao  flatten a finished run's trajectories into a training dataset
    eval         score a run's best workflow on the held-out test split
    replay       re-derive report.json from recorded helper traffic
    report       rebuild report.json and the iteration-curve CSV from disk

Exit codes: 0 success, 2 configuration/input problems, 3 backend transport
failures, 1 anything else. Path problems are caught up front, before any
backend is contacted. Only optimize/collect may reach a live backend; eval
refuses non-mock executors unless --allow-live is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

from .backends import build_backend
from .collector import export_dataset
from .engine import run_optimization
from .errors import (
    BackendUnavailable,
    ConfigError,
    DatasetMissing,
    IncompleteRun,
    NotACodeTask,
    NothingToExport,
    ScenarioExhausted,
    TooFewSamples,
    ValidationError,
    WorkflowOptError,
)
from .evaluation import evaluate_on_test
from .gateway import MetaGateway, load_templates
from .model import (
    RunConfig,
    SampleSplit,
    TaskSpec,
    Trajectory,
    load_dataset,
    validate_workflow_program,
)
from .replay import replay_run
from .report import rebuild_report, write_curve_csv
from .runstore import RunStore
from .sandbox.host import SandboxHost

_CONFIG_EXIT = (
    ConfigError,
    ValidationError,
    DatasetMissing,
    TooFewSamples,
    IncompleteRun,
    NothingToExport,
    NotACodeTask,
)
_TRANSPORT_EXIT = (BackendUnavailable, ScenarioExhausted)


def _load_cli_config(path: str) -> tuple[TaskSpec, RunConfig, str, str | None]:
    """Parse the single JSON config file into (task, run config, run dir, templates dir)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if "task" not in doc:
        raise ConfigError("config lacks the required 'task' section")
    run = doc.get("run", {})
    for key in ("meta_backend", "executor_backend"):
        if key not in run:
            raise ConfigError(f"config run section lacks '{key}'")
    try:
        task = TaskSpec.from_dict(doc["task"])
        config = RunConfig.from_dict(run)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return task, config, doc.get("run_dir", "runs/default"), doc.get("templates_dir")


def _validate_paths(task: TaskSpec, config: RunConfig, templates_dir: str | None) -> None:
    """Fail fast on missing files, before any backend is built."""
    if not task.dataset_ref:
        raise DatasetMissing(f"task {task.id} names no dataset file")
    if not os.path.exists(task.dataset_ref):
        raise DatasetMissing(f"dataset not found: {task.dataset_ref}")
    for label, spec in (("meta", config.meta_backend), ("executor", config.executor_backend)):
        if spec.kind == "mock" and not os.path.exists(spec.scenario_path):
            raise ConfigError(f"{label} backend scenario not found: {spec.scenario_path}")
    if templates_dir is not None and not os.path.isdir(templates_dir):
        raise ConfigError(f"templates dir not found: {templates_dir}")
    if config.seed_workflow and not os.path.exists(config.seed_workflow):
        raise ConfigError(f"seed workflow not found: {config.seed_workflow}")


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    fields: dict[str, Any] = config.to_dict()
    if args.iterations is not None:
        fields["iterations"] = args.iterations
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.m is not None:
        fields["m"] = args.m
    return RunConfig.from_dict(fields)


def _cmd_run(args: argparse.Namespace, mode: str) -> int:
    task, config, run_dir, templates_dir = _load_cli_config(args.config)
    config = _apply_overrides(config, args)
    if args.run_dir is not None:
        run_dir = args.run_dir
    _validate_paths(task, config, templates_dir)
    gateway = MetaGateway(
        config.meta_backend,
        templates=load_templates(templates_dir),
        case_input_budget=config.case_input_budget,
        case_answer_budget=config.case_answer_budget,
    )
    artifacts = run_optimization(config, task, mode, run_dir, gateway=gateway)
    print(f"{mode} finished: best score {artifacts.best_score:.4f}, run dir {run_dir}")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    store = RunStore(args.run)
    doc = store.read_config()
    trajectories = [Trajectory.from_dict(d) for d in store.read_trajectories()]
    out = args.out or store.path("rlao_dataset.jsonl")
    header = export_dataset(
        trajectories,
        doc["config"]["tau"],
        out,
        task_id=doc["task"]["id"],
        config_hash=doc["config_hash"],
    )
    counts = header["counts"]
    print(
        f"exported {counts['records']} records from {counts['trajectories']} trajectories to {out}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    store = RunStore(args.run)
    doc = store.read_config()
    task = TaskSpec.from_dict(doc["task"])
    config = RunConfig.from_dict(doc["config"])
    source = store.read_best_workflow()
    if config.executor_backend.kind != "mock" and not args.allow_live:
        raise ConfigError(
            "eval would contact a live executor backend; pass --allow-live to permit it"
        )
    if not task.dataset_ref or not os.path.exists(task.dataset_ref):
        raise DatasetMissing(f"dataset not found: {task.dataset_ref}")
    test = [s for s in load_dataset(task.dataset_ref) if s.split is SampleSplit.TEST]
    if not test:
        raise TooFewSamples(f"dataset {task.dataset_ref} has no test-split samples")

    program = validate_workflow_program(source)
    host = SandboxHost(
        build_backend(config.executor_backend),
        workflow_timeout_ms=config.workflow_timeout_ms,
        exec_code_timeout_ms=config.exec_code_timeout_ms,
        helper_call_limit=config.helper_call_limit,
        log=None,  # test traffic must never pollute the run's helper log
    )

    def execute(sample, phase, index):
        return host.execute_workflow(
            program,
            sample,
            invocation_id=f"test.s{index:04d}",
            entry_point=task.entry_point,
            phase=phase,
        )

    result = evaluate_on_test(
        task,
        test,
        execute,
        workers=config.eval_workers,
        score_timeout_s=config.exec_code_timeout_ms / 1000.0,
    )
    report = store.read_report()
    report["test"] = result.to_dict()
    store.write_report(report)
    print(f"test aggregate {result.aggregate:.4f} over {len(test)} samples")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    report = replay_run(args.run)
    store = RunStore(args.run)
    original = store.read_report()
    verdict = "identical" if report == original else "DIFFERS"
    print(f"replay report written to {store.path('replay', 'report.json')} ({verdict})")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    store = RunStore(args.run)
    report = rebuild_report(store)
    store.write_report(report)
    csv_path = store.path("curve.csv")
    write_curve_csv(store, report, csv_path)
    print(f"report.json and curve.csv written under {args.run}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("optimize", "collect"):
        p = sub.add_parser(name, help=f"run the loop ({name})")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--run-dir", default=None, help="override the config's run dir")
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--m", type=int, default=None, help="candidates per iteration")

    p = sub.add_parser("export-rlao", help="write the reward-weighted dataset")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", default=None, help="output path (default: <run>/rlao_dataset.jsonl)")

    p = sub.add_parser("eval", help="score the best workflow on the test split")
    p.add_argument("--run", required=True)
    p.add_argument("--allow-live", action="store_true")

    p = sub.add_parser("replay", help="re-derive the report from recorded traffic")
    p.add_argument("--run", required=True)

    p = sub.add_parser("report", help="rebuild report.json and curve.csv")
    p.add_argument("--run", required=True)
    return parser


def dispatch(argv: list[str]) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "optimize":
            return _cmd_run(args, "infer")
        if args.command == "collect":
            return _cmd_run(args, "collect")
        if args.command == "export-rlao":
            return _cmd_export(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "replay":
            return _cmd_replay(args)
        return _cmd_report(args)
    except _TRANSPORT_EXIT as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 3
    except _CONFIG_EXIT as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WorkflowOptError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
