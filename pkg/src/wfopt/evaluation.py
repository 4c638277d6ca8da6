"""Evaluation harness: validation splits, per-sample scoring, feedback.

The optimization loop only ever sees the two validation halves: the private
half produces the scalar score, the public half supplies failure case studies
(and its first sample doubles as the fixed probe for self-correction). The
held-out test split is touched exclusively by evaluate_on_test.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable

from .errors import NotACodeTask, TooFewSamples
from .gateway import MessageList, MetaGateway
from .metrics import accuracy_score, token_f1
from .model import (
    CaseStudy,
    ExecStats,
    Feedback,
    Metric,
    Sample,
    SampleSplit,
    TaskSpec,
    WorkflowProgram,
    validate_answer_dict,
)
from .sandbox.correction import Skip, probe_and_correct
from .sandbox.helpers import _code_or_block
from .sandbox.host import SandboxHost, WorkflowResult
from .sandbox.nested import run_nested


def split_validation(
    samples: list[Sample], ratio: float = 0.5, seed: int = 0
) -> tuple[list[Sample], list[Sample]]:
    """Deterministic seeded split into (private_val, public_val).

    Disjoint and exhaustive; both halves are non-empty. Samples are relabeled
    with their assigned split so the assignment can be stored with the data.
    """
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 validation samples, got {len(samples)}")
    if not 0.0 < ratio < 1.0:
        raise TooFewSamples(f"split ratio {ratio} leaves one side empty")
    order = list(range(len(samples)))
    random.Random(seed).shuffle(order)
    n_private = min(max(1, round(len(samples) * ratio)), len(samples) - 1)
    private_idx = set(order[:n_private])
    private = [
        replace(samples[i], split=SampleSplit.PRIVATE_VAL) for i in sorted(private_idx)
    ]
    public = [
        replace(samples[i], split=SampleSplit.PUBLIC_VAL)
        for i in sorted(set(order) - private_idx)
    ]
    return private, public


def score_sample(task: TaskSpec, prediction: str, sample: Sample, *, timeout_s: float = 10.0) -> float:
    """Score one prediction against one sample with the task's metric."""
    if task.metric is Metric.ACCURACY:
        return accuracy_score(prediction, sample.gold)
    if task.metric is Metric.TOKEN_F1:
        return token_f1(prediction, sample.gold)
    # pass@1: the prediction is code text; it must pass every test.
    if sample.public_tests is None:
        raise NotACodeTask(f"sample in task {task.id} carries no tests")
    entry = task.entry_point or "solution"
    code = _code_or_block(prediction, entry) or prediction
    verdict = run_nested(
        code, mode="tests", tests=sample.public_tests, entry_point=entry, timeout_s=timeout_s
    )
    return 1.0 if verdict.ok else 0.0


Execute = Callable[[Sample, str, int], WorkflowResult]


def _stats_of(result: WorkflowResult) -> ExecStats:
    return ExecStats(
        calls=sum(r.llm_requests for r in result.helper_calls),
        tokens_in=sum(r.tokens_in for r in result.helper_calls),
        tokens_out=sum(r.tokens_out for r in result.helper_calls),
        wall_ms=result.wall_ms,
    )


def _run_split(
    task: TaskSpec,
    samples: list[Sample],
    phase: str,
    execute: Execute,
    workers: int,
    timeout_s: float,
) -> tuple[list[tuple[str, float, bool]], ExecStats]:
    """Returns per-sample (prediction, score, executed_ok) in dataset order."""

    def one(idx_sample: tuple[int, Sample]) -> tuple[tuple[str, float, bool], ExecStats]:
        idx, sample = idx_sample
        result = execute(sample, phase, idx)
        if not result.ok:
            return ("", 0.0, False), _stats_of(result)
        prediction = validate_answer_dict(result.answer)
        return (prediction, score_sample(task, prediction, sample, timeout_s=timeout_s), True), _stats_of(
            result
        )

    if workers > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, enumerate(samples)))
    else:
        outcomes = [one(pair) for pair in enumerate(samples)]
    stats = ExecStats()
    rows = []
    for row, stat in outcomes:
        rows.append(row)
        stats = stats + stat
    return rows, stats


def evaluate_workflow(
    task: TaskSpec,
    private_val: list[Sample],
    public_val: list[Sample],
    execute: Execute,
    *,
    case_study_k: int = 3,
    case_seed: str = "0",
    workers: int = 1,
    score_timeout_s: float = 10.0,
) -> Feedback:
    """Score a probed program: private-split mean plus public-split failures.

    Sample-level invocation errors score 0 (the score stays an honest success
    rate); case studies are a seeded-random draw from public failures that
    actually produced a prediction.
    """
    if not private_val:
        raise TooFewSamples("private validation split is empty")
    private_rows, stats_priv = _run_split(
        task, private_val, "eval_priv", execute, workers, score_timeout_s
    )
    public_rows, stats_pub = _run_split(
        task, public_val, "eval_pub", execute, workers, score_timeout_s
    )
    score = sum(s for _, s, _ in private_rows) / len(private_rows)
    pool = [
        CaseStudy(
            input=sample.input,
            model_answer=prediction,
            gold_answer=sample.gold or "; ".join(sample.public_tests or ()),
        )
        for sample, (prediction, s, ran) in zip(public_val, public_rows)
        if ran and s < 1.0
    ]
    rng = random.Random(case_seed)
    chosen = rng.sample(pool, min(case_study_k, len(pool))) if pool else []
    return Feedback(
        score=score,
        case_studies=tuple(chosen),
        failed=False,
        exec_stats=stats_priv + stats_pub,
    )


@dataclass(frozen=True)
class EvalReport:
    """Full-split evaluation: per-sample rows plus the aggregate."""

    per_sample: tuple[tuple[str, str, float], ...]  # (sample id, prediction, score)
    aggregate: float
    split: SampleSplit
    exec_stats: ExecStats

    def __post_init__(self) -> None:
        if self.per_sample:
            mean = sum(s for _, _, s in self.per_sample) / len(self.per_sample)
            if abs(mean - self.aggregate) > 1e-9:
                raise ValueError("aggregate must equal the mean of per-sample scores")

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_sample": [
                {"id": sid, "prediction": pred, "score": score}
                for sid, pred, score in self.per_sample
            ],
            "aggregate": self.aggregate,
            "split": self.split.value,
            "exec_stats": self.exec_stats.to_dict(),
        }


def evaluate_on_test(
    task: TaskSpec,
    test_split: list[Sample],
    execute: Execute,
    *,
    workers: int = 1,
    score_timeout_s: float = 10.0,
) -> EvalReport:
    """Score a finished program on the held-out test split."""
    if not test_split:
        raise TooFewSamples("test split is empty")
    rows, stats = _run_split(task, test_split, "test", execute, workers, score_timeout_s)
    per_sample = tuple(
        (f"test/{idx:04d}", prediction, score) for idx, (prediction, score, _) in enumerate(rows)
    )
    aggregate = sum(s for _, _, s in per_sample) / len(per_sample)
    return EvalReport(per_sample=per_sample, aggregate=aggregate, split=SampleSplit.TEST, exec_stats=stats)


class _CorrectionGateway:
    """Meta-gateway view that logs each correction completion as an event."""

    def __init__(self, inner: MetaGateway, on_meta, iteration: int, candidate: int):
        self.inner = inner
        self.on_meta = on_meta
        self.iteration = iteration
        self.candidate = candidate

    def render_correction_prompt(self, program, error_report, conversation=None):
        return self.inner.render_correction_prompt(program, error_report, conversation)

    def complete(self, messages, temperature, n):
        batch = self.inner.complete_batch(messages, temperature, n)
        self.on_meta(
            {
                "event": "meta",
                "iteration": self.iteration,
                "candidate": self.candidate,
                "purpose": "correction",
                "calls": 1,
                "tokens_in": batch.tokens_in,
                "tokens_out": batch.tokens_out,
            }
        )
        return list(batch.texts)


class SandboxEvaluator:
    """Bundles sandbox execution, probing, and scoring for the engine.

    The probe sample is the first public-split sample, fixed for the run, so
    correction prompts never leak private-split items and runs reproduce.
    """

    def __init__(
        self,
        host: SandboxHost,
        gateway: MetaGateway,
        task: TaskSpec,
        private_val: list[Sample],
        public_val: list[Sample],
        *,
        case_study_k: int = 3,
        seed: int = 0,
        workers: int = 1,
        score_timeout_s: float = 10.0,
    ):
        if not public_val:
            raise TooFewSamples("public validation split is empty; it supplies the probe sample")
        self.host = host
        self.gateway = gateway
        self.task = task
        self.private_val = private_val
        self.public_val = public_val
        self.probe_sample = public_val[0]
        self.case_study_k = case_study_k
        self.seed = seed
        self.workers = workers
        self.score_timeout_s = score_timeout_s
        self.on_meta = None  # set by the engine to mirror usage into the log

    def _execute(self, iteration: int, candidate: int, program: WorkflowProgram) -> Execute:
        def run(sample: Sample, phase: str, index: int) -> WorkflowResult:
            return self.host.execute_workflow(
                program,
                sample,
                invocation_id=f"i{iteration:02d}.k{candidate}.{phase}.s{index}",
                entry_point=self.task.entry_point,
                iteration=iteration,
                candidate=candidate,
                phase=phase,
            )

        return run

    def probe_and_correct(
        self,
        program: WorkflowProgram,
        conversation: MessageList,
        *,
        iteration: int,
        candidate: int,
        temperature: float,
    ) -> WorkflowProgram | Skip:
        def probe(candidate_program: WorkflowProgram, attempt: int) -> WorkflowResult:
            return self.host.execute_workflow(
                candidate_program,
                self.probe_sample,
                invocation_id=f"i{iteration:02d}.k{candidate}.probe.a{attempt}",
                entry_point=self.task.entry_point,
                iteration=iteration,
                candidate=candidate,
                phase="probe",
            )

        gateway = (
            self.gateway
            if self.on_meta is None
            else _CorrectionGateway(self.gateway, self.on_meta, iteration, candidate)
        )
        return probe_and_correct(program, conversation, gateway, probe, temperature=temperature)

    def probe_only(self, program: WorkflowProgram) -> WorkflowResult:
        """Single probe execution without corrections (seed validation)."""
        return self.host.execute_workflow(
            program,
            self.probe_sample,
            invocation_id="i00.k-1.probe.a0",
            entry_point=self.task.entry_point,
            iteration=0,
            candidate=-1,
            phase="probe",
        )

    def evaluate(self, program: WorkflowProgram, *, iteration: int, candidate: int) -> Feedback:
        return evaluate_workflow(
            self.task,
            self.private_val,
            self.public_val,
            self._execute(iteration, candidate, program),
            case_study_k=self.case_study_k,
            case_seed=f"{self.seed}:{iteration}:{candidate}:cases",
            workers=self.workers,
            score_timeout_s=self.score_timeout_s,
        )
