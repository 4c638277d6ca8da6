import pytest
from helpers import make_code_task, make_task
from hypothesis import given
from hypothesis import strategies as st

from wfopt import (
    ErrorInfo,
    ExecStats,
    Metric,
    Sample,
    SampleSplit,
    WorkflowResult,
    evaluate_on_test,
    evaluate_workflow,
    split_validation,
)
from wfopt.errors import NotACodeTask, TooFewSamples
from wfopt.evaluation import EvalReport, score_sample
from wfopt.sandbox.host import HelperCallRecord


def val_samples(n: int) -> list[Sample]:
    return [
        Sample(input=f"Q{i}", gold=str(i), split=SampleSplit.PRIVATE_VAL) for i in range(n)
    ]


def answering(table):
    """Execute stub: look up the reply by sample input; 'BOOM' rows fail."""

    def execute(sample: Sample, phase: str, index: int) -> WorkflowResult:
        reply = table.get(sample.input, "")
        if reply == "BOOM":
            return WorkflowResult(None, ErrorInfo("RuntimeError", "exploded"), (), 5)
        record = HelperCallRecord("inv", 1, "call_llm", {}, {"ok": True}, 1, 10, 2, 1)
        return WorkflowResult({"answer": reply}, None, (record,), 5)

    return execute


# --- split_validation ------------------------------------------------------


def test_split_is_deterministic_and_exhaustive():
    samples = val_samples(10)
    private_a, public_a = split_validation(samples, seed=3)
    private_b, public_b = split_validation(samples, seed=3)
    assert private_a == private_b and public_a == public_b
    inputs = sorted(s.input for s in private_a + public_a)
    assert inputs == sorted(s.input for s in samples)
    assert all(s.split is SampleSplit.PRIVATE_VAL for s in private_a)
    assert all(s.split is SampleSplit.PUBLIC_VAL for s in public_a)


def test_split_seed_changes_assignment():
    samples = val_samples(12)
    private_a, _ = split_validation(samples, seed=0)
    private_b, _ = split_validation(samples, seed=99)
    assert {s.input for s in private_a} != {s.input for s in private_b}


def test_split_sizes_track_ratio():
    samples = val_samples(10)
    private, public = split_validation(samples, ratio=0.3)
    assert len(private) == 3 and len(public) == 7
    private, public = split_validation(samples, ratio=0.95)
    assert len(private) == 9 and len(public) == 1  # never empties a side


def test_split_rejects_degenerate_inputs():
    with pytest.raises(TooFewSamples):
        split_validation(val_samples(1))
    with pytest.raises(TooFewSamples):
        split_validation(val_samples(4), ratio=1.0)
    with pytest.raises(TooFewSamples):
        split_validation(val_samples(4), ratio=0.0)


@given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=50))
def test_split_always_partitions(n, seed):
    samples = val_samples(n)
    private, public = split_validation(samples, seed=seed)
    assert private and public
    assert len(private) + len(public) == n
    assert {s.input for s in private}.isdisjoint({s.input for s in public})


# --- score_sample -----------------------------------------------------------


def test_score_sample_accuracy_and_f1():
    task = make_task()
    sample = Sample(input="q", gold="4", split=SampleSplit.PRIVATE_VAL)
    assert score_sample(task, "4.0", sample) == 1.0
    assert score_sample(task, "5", sample) == 0.0
    f1_task = make_task(metric=Metric.TOKEN_F1)
    words = Sample(input="q", gold="the red fox", split=SampleSplit.PRIVATE_VAL)
    assert score_sample(f1_task, "the red fox", words) == 1.0
    assert 0.0 < score_sample(f1_task, "a red fox ran", words) < 1.0


def test_score_sample_pass_at_1_runs_tests():
    task = make_code_task()
    sample = Sample(
        input="add one",
        gold="",
        split=SampleSplit.PRIVATE_VAL,
        public_tests=("assert solution(2) == 3",),
    )
    good = "def solution(x):\n    return x + 1\n"
    assert score_sample(task, good, sample) == 1.0
    assert score_sample(task, f"notes\n```python\n{good}```", sample) == 1.0
    assert score_sample(task, "def solution(x):\n    return x\n", sample) == 0.0
    assert score_sample(task, "not even code", sample) == 0.0


def test_score_sample_pass_at_1_needs_tests():
    task = make_code_task()
    bare = Sample(input="q", gold="4", split=SampleSplit.PRIVATE_VAL)
    with pytest.raises(NotACodeTask):
        score_sample(task, "def solution():\n    return 1\n", bare)


# --- evaluate_workflow ------------------------------------------------------


def eval_fixture():
    task = make_task()
    private = [
        Sample(input="P1", gold="1", split=SampleSplit.PRIVATE_VAL),
        Sample(input="P2", gold="2", split=SampleSplit.PRIVATE_VAL),
    ]
    public = [
        Sample(input="U1", gold="7", split=SampleSplit.PUBLIC_VAL),
        Sample(input="U2", gold="8", split=SampleSplit.PUBLIC_VAL),
        Sample(input="U3", gold="9", split=SampleSplit.PUBLIC_VAL),
    ]
    return task, private, public


def test_evaluate_scores_private_mean_only():
    task, private, public = eval_fixture()
    table = {"P1": "1", "P2": "wrong", "U1": "7", "U2": "7", "U3": "7"}
    feedback = evaluate_workflow(task, private, public, answering(table))
    assert feedback.score == 0.5  # public answers never move the score
    assert not feedback.failed


def test_evaluate_case_studies_are_public_failures():
    task, private, public = eval_fixture()
    table = {"P1": "1", "P2": "2", "U1": "7", "U2": "bad", "U3": "BOOM"}
    feedback = evaluate_workflow(task, private, public, answering(table))
    # U1 is correct, U3 crashed (no prediction): only U2 qualifies.
    assert [c.input for c in feedback.case_studies] == ["U2"]
    case = feedback.case_studies[0]
    assert case.model_answer == "bad" and case.gold_answer == "8"


def test_evaluate_errors_score_zero():
    task, private, public = eval_fixture()
    table = {"P1": "BOOM", "P2": "2", "U1": "7", "U2": "8", "U3": "9"}
    feedback = evaluate_workflow(task, private, public, answering(table))
    assert feedback.score == 0.5


def test_evaluate_case_draw_is_seeded():
    task, private, public = eval_fixture()
    table = {"P1": "1", "P2": "2", "U1": "no", "U2": "no", "U3": "no"}
    draw = lambda seed: [
        c.input
        for c in evaluate_workflow(
            task, private, public, answering(table), case_study_k=2, case_seed=seed
        ).case_studies
    ]
    assert draw("s1") == draw("s1")
    assert len(draw("s1")) == 2
    variants = {tuple(draw(f"seed{i}")) for i in range(12)}
    assert len(variants) > 1  # seed actually steers the draw


def test_evaluate_gold_falls_back_to_tests():
    task = make_code_task()
    tests = ("assert solution(1) == 2",)
    private = [Sample(input="P1", gold="", split=SampleSplit.PRIVATE_VAL, public_tests=tests)]
    public = [Sample(input="U1", gold="", split=SampleSplit.PUBLIC_VAL, public_tests=tests)]
    table = {"P1": "def solution(x):\n    return x + 1\n", "U1": "def solution(x):\n    return x\n"}
    feedback = evaluate_workflow(task, private, public, answering(table))
    assert feedback.score == 1.0
    assert feedback.case_studies[0].gold_answer == "assert solution(1) == 2"


def test_evaluate_sums_exec_stats():
    task, private, public = eval_fixture()
    table = {"P1": "1", "P2": "2", "U1": "7", "U2": "8", "U3": "9"}
    feedback = evaluate_workflow(task, private, public, answering(table))
    # five invocations, one helper call each (10 in / 2 out), 5ms walls
    assert feedback.exec_stats == ExecStats(calls=5, tokens_in=50, tokens_out=10, wall_ms=25)


def test_evaluate_parallel_matches_serial():
    task, private, public = eval_fixture()
    table = {"P1": "1", "P2": "2", "U1": "7", "U2": "no", "U3": "no"}
    serial = evaluate_workflow(task, private, public, answering(table), workers=1)
    threaded = evaluate_workflow(task, private, public, answering(table), workers=4)
    assert serial == threaded


def test_evaluate_requires_private_samples():
    task, _, public = eval_fixture()
    with pytest.raises(TooFewSamples):
        evaluate_workflow(task, [], public, answering({}))


# --- evaluate_on_test --------------------------------------------------------


def test_evaluate_on_test_ids_and_aggregate():
    task = make_task()
    split = [
        Sample(input="T0", gold="0", split=SampleSplit.TEST),
        Sample(input="T1", gold="1", split=SampleSplit.TEST),
        Sample(input="T2", gold="2", split=SampleSplit.TEST),
    ]
    table = {"T0": "0", "T1": "x", "T2": "2"}
    report = evaluate_on_test(task, split, answering(table))
    assert [sid for sid, _, _ in report.per_sample] == ["test/0000", "test/0001", "test/0002"]
    assert report.aggregate == pytest.approx(2 / 3)
    assert report.split is SampleSplit.TEST
    with pytest.raises(TooFewSamples):
        evaluate_on_test(task, [], answering({}))


def test_eval_report_enforces_aggregate():
    with pytest.raises(ValueError):
        EvalReport(
            per_sample=(("test/0000", "a", 1.0),),
            aggregate=0.25,
            split=SampleSplit.TEST,
            exec_stats=ExecStats(),
        )
    report = EvalReport(
        per_sample=(("test/0000", "a", 1.0), ("test/0001", "b", 0.0)),
        aggregate=0.5,
        split=SampleSplit.TEST,
        exec_stats=ExecStats(),
    )
    doc = report.to_dict()
    assert doc["aggregate"] == 0.5 and doc["split"] == "test"
    assert doc["per_sample"][1] == {"id": "test/0001", "prediction": "b", "score": 0.0}
