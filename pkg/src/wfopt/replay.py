"""Deterministic replay: re-execute a run from its recorded helper traffic.

Replay re-runs every evaluation invocation through a live runtime process,
feeding it the recorded helper replies, then recomputes scores, rewards,
selections, and trajectory counts from scratch. Usage totals are summed from
the original event log (replay spends nothing). The resulting report must be
byte-identical to the one the original run wrote.
"""

from __future__ import annotations

import os
from typing import Any

from .collector import compute_reward, select_best_scores
from .engine import load_splits
from .errors import IncompleteRun
from .evaluation import score_sample
from .model import (
    NO_SCORE,
    ProgramOrigin,
    RunConfig,
    Sample,
    TaskSpec,
    WorkflowProgram,
    validate_answer_dict,
)
from .report import build_report
from .runstore import RunStore, dump_json
from .sandbox.host import HelperCallRecord, ReplaySource, SandboxHost


def _recorded_traffic(
    store: RunStore,
) -> tuple[dict[str, list[HelperCallRecord]], dict[str, int]]:
    records: dict[str, list[HelperCallRecord]] = {}
    walls: dict[str, int] = {}
    for event in store.iter_helper_events():
        if event.get("event") == "helper":
            rec = HelperCallRecord.from_dict(event)
            records.setdefault(rec.invocation_id, []).append(rec)
        elif event.get("event") == "invocation_end":
            walls[event["invocation_id"]] = int(event.get("wall_ms", 0))
    for bucket in records.values():
        bucket.sort(key=lambda r: r.sequence_no)
    return records, walls


class _Replayer:
    def __init__(
        self,
        host: SandboxHost,
        task: TaskSpec,
        records: dict[str, list[HelperCallRecord]],
        walls: dict[str, int],
        score_timeout_s: float,
    ):
        self.host = host
        self.task = task
        self.records = records
        self.walls = walls
        self.score_timeout_s = score_timeout_s

    def run_one(
        self, program: WorkflowProgram, sample: Sample, invocation_id: str
    ) -> tuple[float, bool]:
        """Re-execute one recorded invocation; returns (score, executed_ok)."""
        source = ReplaySource(
            records=tuple(self.records.get(invocation_id, ())),
            wall_ms=self.walls.get(invocation_id, 0),
        )
        result = self.host.execute_workflow(
            program, sample, invocation_id=invocation_id, entry_point=self.task.entry_point,
            replay=source,
        )
        if not result.ok:
            return 0.0, False
        prediction = validate_answer_dict(result.answer)
        return score_sample(self.task, prediction, sample, timeout_s=self.score_timeout_s), True

    def score_split(
        self,
        program: WorkflowProgram,
        samples: list[Sample],
        iteration: int,
        candidate: int,
        phase: str,
    ) -> float:
        scores = [
            self.run_one(program, sample, f"i{iteration:02d}.k{candidate}.{phase}.s{idx}")[0]
            for idx, sample in enumerate(samples)
        ]
        return sum(scores) / len(scores)


def replay_run(run_dir: str, *, runtime_cmd: list[str] | None = None) -> dict[str, Any]:
    """Re-derive report.json from recorded traffic; writes replay/report.json."""
    store = RunStore(run_dir)
    doc = store.read_config()
    task = TaskSpec.from_dict(doc["task"])
    config = RunConfig.from_dict(doc["config"])
    mode = doc["mode"]
    original = store.read_report()

    records, walls = _recorded_traffic(store)
    private, _public = load_splits(task, config)
    host = SandboxHost(
        None,  # helper replies come from the recording, never a backend
        workflow_timeout_ms=config.workflow_timeout_ms,
        exec_code_timeout_ms=config.exec_code_timeout_ms,
        helper_call_limit=config.helper_call_limit,
        log=None,
        runtime_cmd=runtime_cmd,
    )
    replayer = _Replayer(
        host, task, records, walls, score_timeout_s=config.exec_code_timeout_ms / 1000.0
    )

    seed = store.read_seed()
    best: float | None = None
    if seed is not None:
        program = WorkflowProgram(seed["source"], origin=ProgramOrigin.SEED)
        best = replayer.score_split(program, private, 0, -1, "eval_priv")

    curve: list[float | None] = []
    rows: list[dict[str, Any]] = []
    window_rows: dict[int, dict[int, dict[str, Any]]] = {}
    for iteration in store.list_iterations():
        state = store.read_state(iteration)
        window_best = (
            NO_SCORE if state["window_best_before"] is None else state["window_best_before"]
        )
        previous = state["last_score_before"]

        scores: list[float | None] = []
        rewards: list[float | None] = []
        skipped: list[dict[str, Any]] = []
        viable: list[int] = []
        for candidate in store.list_candidates(iteration):
            stored = store.read_candidate(iteration, candidate)
            if stored["feedback"]["score"] is None:
                scores.append(None)
                rewards.append(None)
                skipped.append(
                    {"candidate": candidate, "reason": stored["feedback"]["skip_reason"]}
                )
                continue
            program = WorkflowProgram(
                stored["source"],
                correction_attempts=stored["feedback"]["correction_attempts"] or 0,
            )
            # Only the private half feeds the score; public invocations are
            # case-study material and never affect the report, so they are
            # not re-executed.
            score = replayer.score_split(program, private, iteration, candidate, "eval_priv")
            scores.append(score)
            rewards.append(compute_reward(score, previous, window_best))
            viable.append(candidate)

        selected = select_best_scores(scores)
        filtered = [
            k
            for k in viable
            if mode == "collect"
            and rewards[k] is not None
            and rewards[k] < config.filter_threshold
            and k != selected
        ]
        if selected is not None:
            chosen_score = scores[selected]
            if best is None or chosen_score > best:
                best = chosen_score
        curve.append(best)
        row = {
            "iteration": iteration,
            "window": state["window"],
            "turn": state["turn"],
            "candidate_scores": scores,
            "rewards": rewards,
            "selected": selected,
            "skipped": skipped,
            "filtered": filtered,
        }
        rows.append(row)
        window_rows.setdefault(state["window"], {})[state["turn"]] = {
            "selected": selected,
            "viable_unselected_unfiltered": [
                k for k in viable if k != selected and k not in filtered
            ],
        }

    if best is None:
        raise IncompleteRun("replay found no selected candidate and no seed")

    total = one_turn = two_turn = 0
    for window in sorted(window_rows):
        turns = window_rows[window]
        for turn in turns.values():
            one_turn += len(turn["viable_unselected_unfiltered"])
        if (
            1 in turns
            and 2 in turns
            and turns[1]["selected"] is not None
            and turns[2]["selected"] is not None
        ):
            two_turn += 1
    total = one_turn + two_turn

    report = build_report(
        task_id=task.id,
        mode=mode,
        config_hash=doc["config_hash"],
        iterations=config.iterations,
        curve=curve,
        rows=rows,
        best_score=best,
        trajectories=[],
        totals=store.sum_log_totals(),
        test=original.get("test"),
    )
    report["trajectories"] = {"total": total, "one_turn": one_turn, "two_turn": two_turn}

    out_dir = store.path("replay")
    os.makedirs(out_dir, exist_ok=True)
    dump_json(os.path.join(out_dir, "report.json"), report)
    return report
