import json
import os

import pytest
from helpers import (
    FakeEvaluator,
    make_samples,
    make_task,
    mock_config,
    queued_gateway,
    reply,
    scripted_gateway,
    wf_source,
)
from hypothesis import given
from hypothesis import strategies as st

from wfopt import (
    NO_SCORE,
    ExecStats,
    Feedback,
    Sample,
    SampleSplit,
    WorkflowProgram,
    run_optimization,
)
from wfopt.engine import init_state, load_splits, reset_window, transition
from wfopt.errors import (
    DatasetMissing,
    SeedlessAllFailed,
    SeedWorkflowInvalid,
    ValidationError,
    WindowFull,
)

TASK = make_task()


def entry(score):
    return (WorkflowProgram(wf_source(f"e{score}", score)), Feedback(score, (), False, ExecStats()))


# --- window state machine ----------------------------------------------------


def test_init_state_fresh_and_carried():
    fresh = init_state("instr", TASK)
    assert fresh.window_history == () and fresh.window_best == NO_SCORE
    assert fresh.last_score is None

    carried = entry(0.6)
    seeded = init_state("instr", TASK, carried)
    assert seeded.window_history == (carried,)
    assert seeded.window_best == 0.6 and seeded.last_score == 0.6


def test_transition_tracks_best_and_fills():
    state = init_state("instr", TASK)
    state = transition(state, *entry(0.4))
    assert state.window_best == 0.4 and state.last_score == 0.4
    state = transition(state, *entry(0.2))
    assert state.window_best == 0.4 and state.last_score == 0.2
    with pytest.raises(WindowFull):
        transition(state, *entry(0.9))


def test_reset_window_carries_winner():
    state = transition(init_state("instr", TASK), *entry(0.4))
    state = transition(state, *entry(0.8))
    carried = entry(0.8)
    fresh = reset_window(state, carried)
    assert fresh.window_history == (carried,)
    assert fresh.window_best == 0.8  # the window maximum starts over at the carried score
    assert reset_window(state).window_history == ()


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=2))
def test_window_best_is_history_max(scores):
    state = init_state("instr", TASK)
    for s in scores:
        state = transition(state, *entry(s))
    assert state.window_best == max(scores)
    assert state.last_score == scores[-1]


# --- split loading ---------------------------------------------------------


def test_load_splits_honours_stored_labels(tmp_path):
    config = mock_config(tmp_path)
    samples = make_samples()
    private, public = load_splits(TASK, config, samples)
    assert [s.input for s in private] == ["Q1: 2+2?", "Q2: 3+3?"]
    assert [s.input for s in public] == ["Q3: 5+5?", "Q4: 7+7?"]


def test_load_splits_rejects_half_labeled(tmp_path):
    config = mock_config(tmp_path)
    samples = [Sample(input="Q", gold="1", split=SampleSplit.PRIVATE_VAL)]
    with pytest.raises(ValidationError):
        load_splits(TASK, config, samples)


def test_load_splits_splits_test_free_pool(tmp_path):
    config = mock_config(tmp_path, seed=5)
    samples = [Sample(input=f"Q{i}", gold=str(i), split=SampleSplit.TEST) for i in range(6)]
    with pytest.raises(Exception):
        load_splits(TASK, config, samples)  # everything held out: nothing to split


def test_load_splits_requires_dataset(tmp_path):
    config = mock_config(tmp_path)
    with pytest.raises(DatasetMissing):
        load_splits(make_task(dataset_ref=str(tmp_path / "absent.jsonl")), config, None)


# --- run_optimization --------------------------------------------------------


def run(tmp_path, step_responses, mode="infer", evaluator=None, **config_overrides):
    config_overrides.setdefault("iterations", len(step_responses))
    config = mock_config(tmp_path, **config_overrides)
    run_dir = str(tmp_path / "run")
    evaluator = evaluator or FakeEvaluator()
    artifacts = run_optimization(
        config,
        TASK,
        mode,
        run_dir,
        gateway=scripted_gateway(step_responses),
        evaluator=evaluator,
    )
    return artifacts, run_dir, evaluator


def test_infer_run_advances_windows(tmp_path):
    scores = [0.3, 0.5, 0.2, 0.4]
    steps = [[reply(wf_source(f"v{i}", s))] for i, s in enumerate(scores)]
    artifacts, run_dir, _ = run(tmp_path, steps)

    assert [(r.window, r.turn) for r in artifacts.iteration_log] == [(0, 1), (0, 2), (1, 1), (1, 2)]
    assert artifacts.global_best_curve == (0.3, 0.5, 0.5, 0.5)
    assert artifacts.best_score == 0.5
    assert "v1" in artifacts.best_program.source

    # pre-iteration snapshots mirror the window mechanics
    state0 = json.load(open(os.path.join(run_dir, "iterations", "0", "state.json")))
    assert state0["window_best_before"] is None and state0["history_scores"] == []
    state1 = json.load(open(os.path.join(run_dir, "iterations", "1", "state.json")))
    assert state1 == {
        "iteration": 1,
        "window": 0,
        "turn": 2,
        "history_scores": [0.3],
        "window_best_before": 0.3,
        "last_score_before": 0.3,
    }
    # after the window closes, the carried winner opens the next one
    state2 = json.load(open(os.path.join(run_dir, "iterations", "2", "state.json")))
    assert state2["window"] == 1 and state2["turn"] == 1
    assert state2["history_scores"] == [0.5] and state2["window_best_before"] == 0.5


def test_run_writes_all_artifacts(tmp_path):
    steps = [[reply(wf_source("a", 0.3))], [reply(wf_source("b", 0.6))]]
    artifacts, run_dir, _ = run(tmp_path, steps)
    for name in ("config.json", "trajectories.jsonl", "best_workflow.src", "report.json", "helper_log.jsonl"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    assert open(os.path.join(run_dir, "best_workflow.src")).read() == artifacts.best_program.source
    candidate = os.path.join(run_dir, "iterations", "0", "candidate_0")
    feedback = json.load(open(os.path.join(candidate, "feedback.json")))
    assert feedback["score"] == 0.3 and feedback["selected"] is True
    assert open(os.path.join(candidate, "action.txt")).read() == steps[0][0]


def test_collect_mode_samples_full_batches(tmp_path):
    steps = [
        [reply(wf_source(f"i{i}k{k}", 0.1 * (i + k))) for k in range(3)]
        for i in range(2)
    ]
    artifacts, _, evaluator = run(tmp_path, steps, mode="collect", m=3)
    assert all(len(r.candidates) == 3 for r in artifacts.iteration_log)
    assert len(evaluator.evaluated) == 6
    assert artifacts.report["mode"] == "collect"


def test_skipped_iteration_retries_same_turn(tmp_path):
    # The retry re-renders an unchanged state, so replies must be scripted by
    # call order (a scenario would just replay the dead reply forever).
    batches = [
        ["no code in this reply at all"],
        [reply(wf_source("retry", 0.4))],
        [reply(wf_source("next", 0.2))],
    ]
    config = mock_config(tmp_path, iterations=3)
    artifacts = run_optimization(
        config, TASK, "infer", str(tmp_path / "run"),
        gateway=queued_gateway(batches), evaluator=FakeEvaluator(),
    )
    assert [(r.window, r.turn) for r in artifacts.iteration_log] == [(0, 1), (0, 1), (0, 2)]
    assert artifacts.global_best_curve == (None, 0.4, 0.4)
    assert artifacts.iteration_log[0].selected is None
    # the retried prompt is byte-identical to the failed one
    assert artifacts.iteration_log[1].state_render == artifacts.iteration_log[0].state_render


def test_all_iterations_dead_without_seed(tmp_path):
    steps = [["nothing here"], ["still nothing"]]
    with pytest.raises(SeedlessAllFailed):
        run(tmp_path, steps)


def test_seed_workflow_opens_first_window(tmp_path):
    seed_path = tmp_path / "seed.py"
    seed_path.write_text(wf_source("seed", 0.55), encoding="utf-8")
    steps = [[reply(wf_source("gen", 0.2))]]
    artifacts, run_dir, _ = run(tmp_path, steps, seed_workflow=str(seed_path))
    # the seed plays the carried-entry role: window 0 looks like any
    # post-reset window, with both sampled turns still to come
    assert [(r.window, r.turn) for r in artifacts.iteration_log] == [(0, 1)]
    assert artifacts.best_score == 0.55  # generated candidate never beat the seed
    assert "seed" in artifacts.best_program.source
    seed_doc = json.load(open(os.path.join(run_dir, "seed.json")))
    assert seed_doc["feedback"]["score"] == 0.55
    state0 = json.load(open(os.path.join(run_dir, "iterations", "0", "state.json")))
    assert state0["history_scores"] == [0.55] and state0["window_best_before"] == 0.55


def test_dead_iterations_with_seed_still_finish(tmp_path):
    seed_path = tmp_path / "seed.py"
    seed_path.write_text(wf_source("seed", 0.5), encoding="utf-8")
    artifacts, _, _ = run(tmp_path, [["no code"], ["no code either"]], seed_workflow=str(seed_path))
    assert artifacts.best_score == 0.5
    assert artifacts.global_best_curve == (0.5, 0.5)


def test_seed_failures_are_fatal(tmp_path):
    steps = [[reply(wf_source("gen", 0.2))]]
    missing = tmp_path / "absent.py"
    with pytest.raises(SeedWorkflowInvalid):
        run(tmp_path, steps, seed_workflow=str(missing))

    bad = tmp_path / "bad.py"
    bad.write_text("x = 1\n", encoding="utf-8")
    with pytest.raises(SeedWorkflowInvalid):
        run(tmp_path, steps, seed_workflow=str(bad))

    dies = tmp_path / "dies.py"
    dies.write_text(wf_source("SKIPME", 0.9), encoding="utf-8")
    with pytest.raises(SeedWorkflowInvalid):
        run(tmp_path, steps, seed_workflow=str(dies))


def test_mode_is_validated(tmp_path):
    config = mock_config(tmp_path, iterations=1)
    with pytest.raises(ValidationError):
        run_optimization(config, TASK, "train", str(tmp_path / "r"), gateway=scripted_gateway([]), evaluator=FakeEvaluator())


def test_report_totals_come_from_log(tmp_path):
    steps = [[reply(wf_source("a", 0.3))], [reply(wf_source("b", 0.6))]]
    artifacts, run_dir, _ = run(tmp_path, steps)
    totals = artifacts.report["totals"]
    assert totals["meta_requests"] == 2  # one sampling call per iteration
    assert totals["meta_tokens_out"] > 0
    log_lines = open(os.path.join(run_dir, "helper_log.jsonl")).read().splitlines()
    assert len([l for l in log_lines if '"meta"' in l]) == 2


def test_curve_is_running_max_of_selected_scores(tmp_path):
    scores = [0.4, 0.1, 0.9, 0.3, 0.5]
    steps = [[reply(wf_source(f"v{i}", s))] for i, s in enumerate(scores)]
    artifacts, _, _ = run(tmp_path, steps)
    running = []
    best = None
    for record in artifacts.iteration_log:
        score = record.candidates[record.selected].feedback.score
        best = score if best is None else max(best, score)
        running.append(best)
    assert list(artifacts.global_best_curve) == running
