"""Run summaries: the report.json structure and the per-iteration curve CSV.

The same builder serves three callers: the engine (from in-memory records),
the `report` subcommand (rebuilt from run-dir artifacts alone), and replay
(from re-executed records). All three must produce identical bytes for the
same run, so nothing here may depend on wall-clock time or dict order.
"""

from __future__ import annotations

import csv
from typing import Any, Iterable

from .collector import IterationRecord
from .errors import IncompleteRun, IoFailure
from .model import Trajectory
from .runstore import RunStore

SCHEMA_VERSION = 1


def iteration_row(record: IterationRecord) -> dict[str, Any]:
    """Flatten one iteration's batch into the report row shape."""
    return {
        "iteration": record.iteration,
        "window": record.window,
        "turn": record.turn,
        "candidate_scores": [
            None if c.feedback is None else c.feedback.score for c in record.candidates
        ],
        "rewards": [c.reward for c in record.candidates],
        "selected": record.selected,
        "skipped": [
            {"candidate": c.index, "reason": c.skip_reason}
            for c in record.candidates
            if c.skip_reason is not None
        ],
        "filtered": [c.index for c in record.candidates if c.filtered],
    }


def trajectory_counts(trajectories: Iterable[Trajectory | dict[str, Any]]) -> dict[str, int]:
    total = one_turn = 0
    for t in trajectories:
        steps = t["steps"] if isinstance(t, dict) else t.steps
        total += 1
        one_turn += 1 if len(steps) == 1 else 0
    return {"total": total, "one_turn": one_turn, "two_turn": total - one_turn}


def build_report(
    *,
    task_id: str,
    mode: str,
    config_hash: str,
    iterations: int,
    curve: list[float | None],
    rows: list[dict[str, Any]],
    best_score: float,
    trajectories: Iterable[Trajectory | dict[str, Any]],
    totals: dict[str, int],
    test: dict[str, Any] | None = None,
) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "task_id": task_id,
        "mode": mode,
        "config_hash": config_hash,
        "iterations": iterations,
        "curve": list(curve),
        "iteration_rows": rows,
        "best": {"score": best_score},
        "trajectories": trajectory_counts(trajectories),
        "totals": totals,
        "test": test,
    }


def rebuild_report(store: RunStore) -> dict[str, Any]:
    """Reconstruct report.json from run-dir artifacts, without re-executing.

    Reads config.json, the per-iteration state snapshots and candidate
    feedbacks, trajectories.jsonl, and the helper log. The result matches the
    report the engine wrote (minus any later test-eval update).
    """
    config = store.read_config()
    iteration_ids = store.list_iterations()
    if not iteration_ids:
        raise IncompleteRun("run has no recorded iterations")
    try:
        test = store.read_report().get("test")
    except IncompleteRun:
        test = None  # no prior report to inherit a test metric from

    seed = store.read_seed()
    best: float | None = None if seed is None else seed["feedback"]["score"]
    curve: list[float | None] = []
    rows: list[dict[str, Any]] = []
    for iteration in iteration_ids:
        state = store.read_state(iteration)
        scores: list[float | None] = []
        rewards: list[float | None] = []
        skipped: list[dict[str, Any]] = []
        filtered: list[int] = []
        selected: int | None = None
        for candidate in store.list_candidates(iteration):
            fb = store.read_candidate(iteration, candidate)["feedback"]
            scores.append(fb["score"])
            rewards.append(fb["reward"])
            if fb["skip_reason"] is not None:
                skipped.append({"candidate": candidate, "reason": fb["skip_reason"]})
            if fb["filtered"]:
                filtered.append(candidate)
            if fb["selected"]:
                selected = candidate
        if selected is not None:
            score = scores[selected]
            if best is None or score > best:
                best = score
        curve.append(best)
        rows.append(
            {
                "iteration": iteration,
                "window": state["window"],
                "turn": state["turn"],
                "candidate_scores": scores,
                "rewards": rewards,
                "selected": selected,
                "skipped": skipped,
                "filtered": filtered,
            }
        )

    if best is None:
        raise IncompleteRun("run selected no candidate and recorded no seed")
    return build_report(
        task_id=config["task"]["id"],
        mode=config["mode"],
        config_hash=config["config_hash"],
        iterations=config["config"]["iterations"],
        curve=curve,
        rows=rows,
        best_score=best,
        trajectories=store.read_trajectories(),
        totals=store.sum_log_totals(),
        test=test,
    )


def _usage_by_iteration(store: RunStore) -> dict[int, dict[str, int]]:
    """Per-iteration API calls and token totals from the event log."""
    usage: dict[int, dict[str, int]] = {}
    for event in store.iter_helper_events():
        iteration = event.get("iteration")
        if iteration is None:
            continue
        row = usage.setdefault(int(iteration), {"api_calls": 0, "tokens": 0})
        if event.get("event") == "meta":
            row["api_calls"] += int(event.get("calls", 0))
            row["tokens"] += int(event.get("tokens_in", 0)) + int(event.get("tokens_out", 0))
        elif event.get("event") == "helper":
            row["api_calls"] += int(event.get("llm_requests", 0))
            row["tokens"] += int(event.get("tokens_in", 0)) + int(event.get("tokens_out", 0))
    return usage


def write_curve_csv(store: RunStore, report: dict[str, Any], path: str) -> None:
    """One CSV row per iteration: progress plus spend."""
    usage = _usage_by_iteration(store)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "best_so_far", "candidate_scores", "api_calls", "tokens"])
            for row in report["iteration_rows"]:
                iteration = row["iteration"]
                best = report["curve"][iteration]
                spend = usage.get(iteration, {"api_calls": 0, "tokens": 0})
                writer.writerow(
                    [
                        iteration,
                        "" if best is None else f"{best:.6g}",
                        ";".join(
                            "" if s is None else f"{s:.6g}" for s in row["candidate_scores"]
                        ),
                        spend["api_calls"],
                        spend["tokens"],
                    ]
                )
    except OSError as exc:
        raise IoFailure(f"cannot write curve csv to {path}: {exc}") from exc
