"""Candidate sampling, reward shaping, selection, and trajectory export.

One iteration = sample m candidate actions from the meta model against the
current state prompt, probe/correct/evaluate each, reward each against the
SAME pre-iteration baselines, then keep the argmax. Per-candidate records are
kept verbatim (raw completion text included) so runs can be replayed and the
reward-weighted dataset can be exported without re-contacting any model.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Any, Callable

from .errors import IoFailure, NonpositiveTau, NothingToExport, WorkflowOptError, error_kind
from .gateway import Message, MetaGateway, Role
from .model import (
    NO_SCORE,
    AgentAction,
    Feedback,
    OptimizationState,
    Provenance,
    RunConfig,
    Trajectory,
    TrajectoryStep,
)
from .sandbox.correction import SKIP


def compute_reward(score: float, previous_score: float | None, window_best: float) -> float:
    """Shaped reward for one evaluated candidate.

    1.0 for a new window-best, 0.5 for improving on the immediately previous
    turn without beating the window best, else 0. Both comparisons are strict,
    and the branches are checked in that order.
    """
    if score > window_best:  # NO_SCORE is -inf, so an empty window always takes this branch
        return 1.0
    if previous_score is not None and score > previous_score:
        return 0.5
    return 0.0


def rwr_weight(reward: float, tau: float) -> float:
    """exp(reward / tau); tau must be positive."""
    if tau <= 0.0:
        raise NonpositiveTau(f"tau must be > 0, got {tau}")
    return math.exp(reward / tau)


@dataclass(frozen=True)
class CandidateRecord:
    """Everything observed about one sampled candidate in one iteration."""

    index: int  # position within the batch, 0-based
    raw_text: str  # exact completion text, unmodified
    action: AgentAction | None  # parsed (and possibly corrected) action
    feedback: Feedback | None  # None when the candidate never got evaluated
    reward: float | None
    selected: bool
    filtered: bool  # dropped from the export by the reward filter
    skip_reason: str | None  # error kind when action/feedback is missing

    def __post_init__(self) -> None:
        if self.selected and (self.feedback is None or self.filtered):
            raise ValueError("selected candidate must be evaluated and unfiltered")
        if self.action is None and self.skip_reason is None:
            raise ValueError("unparsed candidate needs a skip_reason")


@dataclass(frozen=True)
class IterationRecord:
    """One optimization iteration: the prompt, the batch, the choice."""

    iteration: int
    window: int
    turn: int  # 1 or 2: position within the truncated window
    state_render: str  # the user prompt the batch was sampled against
    candidates: tuple[CandidateRecord, ...]
    selected: int | None  # index into candidates, None when all failed

    def __post_init__(self) -> None:
        if self.turn not in (1, 2):
            raise ValueError(f"turn must be 1 or 2, got {self.turn}")
        if self.selected is not None and not self.candidates[self.selected].selected:
            raise ValueError("selected index must point at the selected record")


def select_best_scores(scores: list[float | None]) -> int | None:
    """Argmax over present scores; ties keep the lowest index."""
    best: int | None = None
    best_score = NO_SCORE
    for index, score in enumerate(scores):
        if score is not None and score > best_score:
            best, best_score = index, score
    return best


def select_best(records: list[CandidateRecord]) -> int | None:
    """Argmax over evaluated candidates' scores; ties keep the lowest index."""
    return select_best_scores(
        [None if rec.feedback is None else rec.feedback.score for rec in records]
    )


def collect_iteration(
    state: OptimizationState,
    config: RunConfig,
    gateway: MetaGateway,
    evaluator: Any,
    *,
    iteration: int,
    window: int,
    turn: int,
    n: int | None = None,
    temperature: float | None = None,
    filter_enabled: bool = True,
    on_meta: Callable[[dict[str, Any]], None] | None = None,
) -> IterationRecord:
    """Sample one batch of candidates and process every one of them.

    All candidates in the batch are rewarded against the same pre-iteration
    baselines (previous turn's score and the window best), not against each
    other, so rewards are independent of batch order.
    """
    n = config.m if n is None else n
    temperature = config.meta_temperature_collect if temperature is None else temperature
    system, user = gateway.render_state_prompt(state)
    messages = (system, user)
    batch = gateway.complete_batch(messages, temperature=temperature, n=n)
    if on_meta is not None:
        on_meta(
            {
                "event": "meta",
                "iteration": iteration,
                "candidate": -1,
                "purpose": "sample",
                "calls": 1,
                "tokens_in": batch.tokens_in,
                "tokens_out": batch.tokens_out,
            }
        )

    previous_score = state.last_score
    window_best = state.window_best

    records: list[CandidateRecord] = []
    for index, raw in enumerate(batch.texts):
        try:
            action = gateway.parse_action(raw)
        except WorkflowOptError as exc:
            records.append(
                CandidateRecord(
                    index=index,
                    raw_text=raw,
                    action=None,
                    feedback=None,
                    reward=None,
                    selected=False,
                    filtered=False,
                    skip_reason=error_kind(exc),
                )
            )
            continue

        conversation = messages + (Message(Role.ASSISTANT, raw),)
        outcome = evaluator.probe_and_correct(
            action.program,
            conversation,
            iteration=iteration,
            candidate=index,
            temperature=config.meta_temperature_infer,
        )
        if outcome is SKIP:
            records.append(
                CandidateRecord(
                    index=index,
                    raw_text=raw,
                    action=action,
                    feedback=None,
                    reward=None,
                    selected=False,
                    filtered=False,
                    skip_reason="CorrectionExhausted",
                )
            )
            continue
        if outcome is not action.program:
            # Corrections rewrote the source; the action keeps the original
            # completion text but points at the program that actually ran.
            action = AgentAction(
                analysis=action.analysis, program=outcome, raw_response=action.raw_response
            )

        feedback = evaluator.evaluate(action.program, iteration=iteration, candidate=index)
        reward = compute_reward(feedback.score, previous_score, window_best)
        records.append(
            CandidateRecord(
                index=index,
                raw_text=raw,
                action=action,
                feedback=feedback,
                reward=reward,
                selected=False,
                filtered=filter_enabled and reward < config.filter_threshold,
                skip_reason=None,
            )
        )

    chosen = select_best(records)
    if chosen is not None:
        # Selection ignores the export filter: the best candidate still drives
        # the optimization even when its reward sits below the threshold.
        records[chosen] = replace(records[chosen], selected=True, filtered=False)

    return IterationRecord(
        iteration=iteration,
        window=window,
        turn=turn,
        state_render=user.content,
        candidates=tuple(records),
        selected=chosen,
    )


def assemble_trajectories(
    iteration_log: list[IterationRecord], config: RunConfig, task_id: str
) -> list[Trajectory]:
    """Build the training trajectories for a finished collection run.

    Per truncated window: every viable unselected candidate becomes a one-turn
    trajectory anchored at its own turn; the two selected candidates (turn 1
    then turn 2) join into a single two-turn trajectory. A window whose second
    turn never happened (run ended, or turn 2 selected nothing) still emits
    its one-turn trajectories; the pair is dropped.
    """
    by_window: dict[int, dict[int, IterationRecord]] = {}
    for rec in iteration_log:
        by_window.setdefault(rec.window, {})[rec.turn] = rec

    trajectories: list[Trajectory] = []
    for window in sorted(by_window):
        turns = by_window[window]
        for turn in sorted(turns):
            rec = turns[turn]
            provenance = (
                Provenance.UNSELECTED_TURN1 if turn == 1 else Provenance.UNSELECTED_TURN2
            )
            for cand in rec.candidates:
                if cand.feedback is None or cand.filtered or cand.selected:
                    continue
                trajectories.append(
                    Trajectory(
                        id=f"{task_id}.w{window:03d}.t{turn}.k{cand.index}",
                        steps=(
                            TrajectoryStep(
                                state_render=rec.state_render,
                                action_text=cand.raw_text,
                                reward=cand.reward,
                                score=cand.feedback.score,
                                iteration=rec.iteration,
                                candidate=cand.index,
                            ),
                        ),
                        provenance=provenance,
                        task_id=task_id,
                    )
                )
        first, second = turns.get(1), turns.get(2)
        if (
            first is not None
            and second is not None
            and first.selected is not None
            and second.selected is not None
        ):
            sel1 = first.candidates[first.selected]
            sel2 = second.candidates[second.selected]
            trajectories.append(
                Trajectory(
                    id=f"{task_id}.w{window:03d}.pair",
                    steps=(
                        TrajectoryStep(
                            state_render=first.state_render,
                            action_text=sel1.raw_text,
                            reward=sel1.reward,
                            score=sel1.feedback.score,
                            iteration=first.iteration,
                            candidate=sel1.index,
                        ),
                        TrajectoryStep(
                            state_render=second.state_render,
                            action_text=sel2.raw_text,
                            reward=sel2.reward,
                            score=sel2.feedback.score,
                            iteration=second.iteration,
                            candidate=sel2.index,
                        ),
                    ),
                    provenance=Provenance.SELECTED_PAIR,
                    task_id=task_id,
                )
            )
    return trajectories


@dataclass(frozen=True)
class RwrRecord:
    """One flattened training record: a single turn of one trajectory."""

    trajectory_id: str
    turn: int  # 1-based position within the trajectory
    context: str
    target: str
    reward: float
    weight: float
    meta: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "trajectory_id": self.trajectory_id,
            "turn": self.turn,
            "context": self.context,
            "target": self.target,
            "reward": self.reward,
            "weight": self.weight,
            "meta": self.meta,
        }


def flatten_records(
    trajectories: list[Trajectory], tau: float, task_id: str
) -> list[RwrRecord]:
    records = []
    for traj in trajectories:
        for pos, step in enumerate(traj.steps, start=1):
            records.append(
                RwrRecord(
                    trajectory_id=traj.id,
                    turn=pos,
                    context=step.state_render,
                    target=step.action_text,
                    reward=step.reward,
                    weight=rwr_weight(step.reward, tau),
                    meta={
                        "task": traj.task_id or task_id,
                        "iteration": step.iteration,
                        "candidate": step.candidate,
                        "provenance": traj.provenance.value,
                    },
                )
            )
    records.sort(key=lambda r: (r.meta["task"], r.meta["iteration"], r.meta["candidate"], r.turn))
    return records


def export_dataset(
    trajectories: list[Trajectory],
    tau: float,
    path: str,
    *,
    task_id: str,
    config_hash: str,
) -> dict[str, Any]:
    """Write the reward-weighted dataset as JSONL; returns the header line."""
    if not trajectories:
        raise NothingToExport("no trajectories to export")
    records = flatten_records(trajectories, tau, task_id)
    one_turn = sum(1 for t in trajectories if len(t.steps) == 1)
    header = {
        "schema_version": 1,
        "tau": tau,
        "config_hash": config_hash,
        "counts": {
            "trajectories": len(trajectories),
            "one_turn": one_turn,
            "two_turn": len(trajectories) - one_turn,
            "records": len(records),
        },
    }
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
            for record in records:
                fh.write(
                    json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
                )
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {path}: {exc}") from exc
    return header
