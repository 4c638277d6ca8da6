"""Shared test builders: tiny tasks, scripted backends, an in-memory evaluator."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from wfopt import (
    BackendSpec,
    ErrorInfo,
    ExecStats,
    Feedback,
    Metric,
    MetaGateway,
    RunConfig,
    Sample,
    SampleSplit,
    ScenarioBackend,
    TaskFamily,
    TaskSpec,
    WorkflowProgram,
    WorkflowResult,
)
from wfopt.sandbox.correction import SKIP


def make_task(tmp_path=None, metric=Metric.ACCURACY, dataset_ref="") -> TaskSpec:
    return TaskSpec(
        id="toyqa",
        family=TaskFamily.QA,
        description_text="Answer short arithmetic questions.",
        metric=metric,
        answer_schema="the number as a string",
        dataset_ref=dataset_ref,
    )


def make_code_task(dataset_ref="") -> TaskSpec:
    return TaskSpec(
        id="toycode",
        family=TaskFamily.CODE,
        description_text="Write a Python function passing the given tests.",
        metric=Metric.PASS_AT_1,
        answer_schema="the complete function source",
        dataset_ref=dataset_ref,
        entry_point="solution",
    )


def make_samples() -> list[Sample]:
    return [
        Sample(input="Q1: 2+2?", gold="4", split=SampleSplit.PRIVATE_VAL),
        Sample(input="Q2: 3+3?", gold="6", split=SampleSplit.PRIVATE_VAL),
        Sample(input="Q3: 5+5?", gold="10", split=SampleSplit.PUBLIC_VAL),
        Sample(input="Q4: 7+7?", gold="14", split=SampleSplit.PUBLIC_VAL),
    ]


def wf_source(tag: str, score: float) -> str:
    """A distinct, valid workflow source carrying its intended mock score."""
    return (
        f"# variant {tag} score={score}\n"
        "def workflow(agent, task):\n"
        f'    return {{"answer": "{tag}"}}\n'
    )


def reply(source: str, analysis: str = "Reasoning about the next design.") -> str:
    return f"{analysis}\n```python\n{source}```\n"


_SCORE_RE = re.compile(r"score=([0-9.]+)")


@dataclass
class FakeEvaluator:
    """Evaluator stand-in: scores come from a `score=` marker in the source.

    Sources containing SKIPME exhaust correction; sources containing FIXME are
    "corrected" once into a runnable variant.
    """

    probes: int = 0
    evaluated: list[str] = field(default_factory=list)
    on_meta: object = None
    case_studies: tuple = ()

    def score_of(self, source: str) -> float:
        m = _SCORE_RE.search(source)
        return float(m.group(1)) if m else 0.0

    def probe_and_correct(self, program, conversation, *, iteration, candidate, temperature):
        self.probes += 1
        if "SKIPME" in program.source:
            return SKIP
        if "FIXME" in program.source:
            return WorkflowProgram(program.source.replace("FIXME", "fixed"), 2)
        return program

    def probe_only(self, program):
        if "SKIPME" in program.source:
            return WorkflowResult(None, ErrorInfo("NameError", "probe failed"), (), 1)
        return WorkflowResult({"answer": "ok"}, None, (), 1)

    def evaluate(self, program, *, iteration, candidate):
        self.evaluated.append(program.source)
        return Feedback(
            score=self.score_of(program.source),
            case_studies=self.case_studies,
            failed=False,
            exec_stats=ExecStats(calls=1, tokens_in=7, tokens_out=3, wall_ms=0),
        )


def scripted_gateway(step_responses: list[list[str]]) -> MetaGateway:
    """MetaGateway over an in-memory scripted scenario."""
    scenario = {"steps": [{"responses": responses} for responses in step_responses]}
    return MetaGateway(ScenarioBackend(scenario))


class QueueBackend:
    """Mock backend scripted by call order, not message content.

    Scenario steps key on distinct prompts, so a retry of an unchanged state
    replays the same reply; this backend instead models a fresh temperature
    draw per call.
    """

    def __init__(self, batches: list[list[str]]):
        self.batches = list(batches)
        self.calls = 0

    def complete(self, messages, temperature: float, n: int):
        from wfopt.backends import CompletionBatch, estimate_tokens

        batch = self.batches[self.calls]
        self.calls += 1
        texts = tuple(batch[i % len(batch)] for i in range(n))
        tokens_in = sum(estimate_tokens(m.get("content", "")) for m in messages)
        return CompletionBatch(texts, tokens_in, sum(estimate_tokens(t) for t in texts))


def queued_gateway(batches: list[list[str]]) -> MetaGateway:
    return MetaGateway(QueueBackend(batches))


def mock_config(tmp_path, **overrides) -> RunConfig:
    """RunConfig whose backend scenario paths exist (content rarely used)."""
    meta = tmp_path / "meta_scenario.json"
    executor = tmp_path / "executor_scenario.json"
    if not meta.exists():
        meta.write_text(json.dumps({"steps": []}), encoding="utf-8")
    if not executor.exists():
        executor.write_text(json.dumps({"rules": []}), encoding="utf-8")
    fields = {
        "meta_backend": BackendSpec.mock(str(meta)),
        "executor_backend": BackendSpec.mock(str(executor)),
    }
    fields.update(overrides)
    return RunConfig(**fields)
