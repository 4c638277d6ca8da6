"""The optimization loop: a truncated two-turn window over design iterations.

State mechanics:
  - A window holds at most two history entries (the fixed horizon). Turn 1 of
    a window appends the selected system via transition(); turn 2 selects but
    never appends: its winner is carried into the next window as that
    window's single starting entry via reset_window().
  - The very first window starts empty (or with the seed workflow when one is
    configured), so every window after it opens with exactly one entry.
  - Rewards are window-local; the global best program is tracked separately
    and is what the run ultimately emits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any

from .backends import build_backend
from .collector import (
    IterationRecord,
    assemble_trajectories,
    collect_iteration,
)
from .errors import (
    DatasetMissing,
    SeedlessAllFailed,
    SeedWorkflowInvalid,
    ValidationError,
    WindowFull,
)
from .evaluation import SandboxEvaluator, split_validation
from .gateway import MetaGateway
from .model import (
    NO_SCORE,
    Feedback,
    HistoryEntry,
    OptimizationState,
    ProgramOrigin,
    RunConfig,
    Sample,
    SampleSplit,
    TaskSpec,
    Trajectory,
    WorkflowProgram,
    load_dataset,
    validate_workflow_program,
)
from .report import build_report, iteration_row
from .runstore import RunStore
from .sandbox.host import SandboxHost

MODES = ("infer", "collect")


def init_state(
    instructions: str, task: TaskSpec, carried: HistoryEntry | None = None
) -> OptimizationState:
    """Fresh window; `carried` seeds it with one entry (reset semantics)."""
    history: tuple[HistoryEntry, ...] = () if carried is None else (carried,)
    best = NO_SCORE if carried is None else carried[1].score
    return OptimizationState(
        instructions=instructions, task=task, window_history=history, window_best=best
    )


def transition(
    state: OptimizationState, program: WorkflowProgram, feedback: Feedback
) -> OptimizationState:
    """Append one evaluated system to the window (turn 1 only)."""
    if len(state.window_history) >= 2:
        raise WindowFull("window already holds two entries; reset before transitioning")
    return OptimizationState(
        instructions=state.instructions,
        task=state.task,
        window_history=state.window_history + ((program, feedback),),
        window_best=max(state.window_best, feedback.score),
    )


def reset_window(
    state: OptimizationState, carried: HistoryEntry | None = None
) -> OptimizationState:
    """Close the window; the carried entry opens the next one."""
    return init_state(state.instructions, state.task, carried)


@dataclass(frozen=True)
class RunArtifacts:
    """Everything a finished run produced, in memory."""

    best_program: WorkflowProgram
    best_score: float
    iteration_log: tuple[IterationRecord, ...]
    global_best_curve: tuple[float | None, ...]  # best-so-far after each iteration
    trajectories: tuple[Trajectory, ...]
    report: dict[str, Any]


def load_splits(
    task: TaskSpec, config: RunConfig, samples: list[Sample] | None = None
) -> tuple[list[Sample], list[Sample]]:
    if samples is None:
        if not task.dataset_ref or not os.path.exists(task.dataset_ref):
            raise DatasetMissing(f"task {task.id} has no dataset at {task.dataset_ref!r}")
        samples = load_dataset(task.dataset_ref)
    private = [s for s in samples if s.split is SampleSplit.PRIVATE_VAL]
    public = [s for s in samples if s.split is SampleSplit.PUBLIC_VAL]
    if private and public:
        return private, public
    if private or public:
        raise ValidationError("dataset labels only one validation half")
    pool = [s for s in samples if s.split is not SampleSplit.TEST]
    return split_validation(pool, seed=config.seed)


def _load_seed(config: RunConfig, evaluator: SandboxEvaluator) -> HistoryEntry | None:
    """Validate, probe and score the optional starting workflow."""
    if not config.seed_workflow:
        return None
    try:
        with open(config.seed_workflow, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        raise SeedWorkflowInvalid(f"cannot read seed workflow: {exc}") from exc
    try:
        program = validate_workflow_program(source, origin=ProgramOrigin.SEED)
    except ValidationError as exc:
        raise SeedWorkflowInvalid(f"seed workflow rejected: {exc}") from exc
    probe = evaluator.probe_only(program)
    if not probe.ok:
        raise SeedWorkflowInvalid(
            f"seed workflow failed its probe: {probe.error.kind}: {probe.error.message}"
        )
    feedback = evaluator.evaluate(program, iteration=0, candidate=-1)
    return (program, feedback)


def run_optimization(
    config: RunConfig,
    task: TaskSpec,
    mode: str,
    run_dir: str,
    *,
    gateway: MetaGateway | None = None,
    evaluator: SandboxEvaluator | None = None,
    samples: list[Sample] | None = None,
) -> RunArtifacts:
    """Run the full loop and persist every artifact under run_dir."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    store = RunStore(run_dir)
    store.prepare()
    digest = store.write_config(task, config, mode)

    if gateway is None:
        gateway = MetaGateway(
            config.meta_backend,
            case_input_budget=config.case_input_budget,
            case_answer_budget=config.case_answer_budget,
        )
    if evaluator is None:
        private, public = load_splits(task, config, samples)
        host = SandboxHost(
            build_backend(config.executor_backend),
            workflow_timeout_ms=config.workflow_timeout_ms,
            exec_code_timeout_ms=config.exec_code_timeout_ms,
            helper_call_limit=config.helper_call_limit,
            log=store.append_helper_event,
        )
        evaluator = SandboxEvaluator(
            host,
            gateway,
            task,
            private,
            public,
            case_study_k=config.case_study_k,
            seed=config.seed,
            workers=config.eval_workers,
            score_timeout_s=config.exec_code_timeout_ms / 1000.0,
        )
    evaluator.on_meta = store.append_helper_event

    try:
        seed_entry = _load_seed(config, evaluator)
        best: tuple[WorkflowProgram, float] | None = None
        if seed_entry is not None:
            best = (seed_entry[0], seed_entry[1].score)
            store.write_seed(
                {
                    "source": seed_entry[0].source,
                    "feedback": seed_entry[1].to_dict(),
                }
            )

        state = init_state(gateway.templates.system, task, seed_entry)
        window = 0
        turn = 1
        curve: list[float | None] = []
        iteration_log: list[IterationRecord] = []

        for iteration in range(config.iterations):
            store.write_state(
                iteration,
                {
                    "iteration": iteration,
                    "window": window,
                    "turn": turn,
                    "history_scores": [fb.score for _, fb in state.window_history],
                    "window_best_before": None
                    if state.window_best == NO_SCORE
                    else state.window_best,
                    "last_score_before": state.last_score,
                },
            )
            record = collect_iteration(
                state,
                config,
                gateway,
                evaluator,
                iteration=iteration,
                window=window,
                turn=turn,
                n=config.m if mode == "collect" else 1,
                temperature=config.meta_temperature_collect
                if mode == "collect"
                else config.meta_temperature_infer,
                filter_enabled=(mode == "collect"),
                on_meta=store.append_helper_event,
            )
            iteration_log.append(record)
            for cand in record.candidates:
                store.write_candidate(
                    iteration,
                    cand.index,
                    raw_text=cand.raw_text,
                    source=cand.action.program.source if cand.action is not None else None,
                    feedback={
                        "score": cand.feedback.score if cand.feedback else None,
                        "case_studies": [c.to_dict() for c in cand.feedback.case_studies]
                        if cand.feedback
                        else [],
                        "exec_stats": cand.feedback.exec_stats.to_dict()
                        if cand.feedback
                        else None,
                        "correction_attempts": cand.action.program.correction_attempts
                        if cand.action is not None
                        else None,
                        "reward": cand.reward,
                        "selected": cand.selected,
                        "filtered": cand.filtered,
                        "skip_reason": cand.skip_reason,
                    },
                )

            if record.selected is not None:
                chosen = record.candidates[record.selected]
                program, feedback = chosen.action.program, chosen.feedback
                if best is None or feedback.score > best[1]:
                    best = (program, feedback.score)
                if turn == 1:
                    state = transition(state, program, feedback)
                    turn = 2
                else:
                    state = reset_window(state, (program, feedback))
                    turn = 1
                    window += 1
            # A fully skipped iteration advances the loop counter only: the
            # state, turn, and window all stay put and the turn is retried.
            curve.append(None if best is None else best[1])

        if best is None:
            raise SeedlessAllFailed(
                "no iteration produced a viable workflow and no seed was configured"
            )

        trajectories = assemble_trajectories(iteration_log, config, task.id)
        store.write_trajectories([t.to_dict() for t in trajectories])
        store.write_best_workflow(best[0].source)

        report = build_report(
            task_id=task.id,
            mode=mode,
            config_hash=digest,
            iterations=config.iterations,
            curve=curve,
            rows=[iteration_row(rec) for rec in iteration_log],
            best_score=best[1],
            trajectories=trajectories,
            totals=store.sum_log_totals(),
        )
        store.write_report(report)
        return RunArtifacts(
            best_program=best[0],
            best_score=best[1],
            iteration_log=tuple(iteration_log),
            global_best_curve=tuple(curve),
            trajectories=tuple(trajectories),
            report=report,
        )
    finally:
        store.close()
