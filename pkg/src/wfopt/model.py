"""Core domain types for the workflow-optimization engine.

All types are immutable value objects: construction validates the declared
invariants, after which instances are safe to share across threads. Each type
round-trips through ``to_dict``/``from_dict`` with field equality (the empty
history sentinel ``-inf`` is encoded as ``null`` because JSON has no
infinities).
"""

from __future__ import annotations

import ast
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .backends import BackendSpec
from .errors import (
    EmptySource,
    FailedFeedback,
    MissingAnswerKey,
    MissingEntryFunction,
    NonCoercibleValue,
    ValidationError,
)

#: Sentinel for "no score recorded yet": any real score strictly exceeds it.
NO_SCORE = float("-inf")


class TaskFamily(str, Enum):
    MATH = "math"
    QA = "qa"
    CODE = "code"


class Metric(str, Enum):
    ACCURACY = "accuracy"
    TOKEN_F1 = "token_f1"
    PASS_AT_1 = "pass_at_1"


class SampleSplit(str, Enum):
    PRIVATE_VAL = "private_val"
    PUBLIC_VAL = "public_val"
    TEST = "test"


class ProgramOrigin(str, Enum):
    SEED = "seed"
    GENERATED = "generated"
    CORRECTED = "corrected"


class Provenance(str, Enum):
    SELECTED_PAIR = "selected_pair"
    UNSELECTED_TURN1 = "unselected_turn1"
    UNSELECTED_TURN2 = "unselected_turn2"


@dataclass(frozen=True)
class TaskSpec:
    """A downstream task the optimized workflow must solve."""

    id: str
    family: TaskFamily
    description_text: str  # task statement as rendered into prompts
    metric: Metric
    answer_schema: str  # free-text answer requirement, e.g. "single letter A-J"
    entry_point: str | None = None  # code tasks only
    dataset_ref: str = ""  # path to the dataset file

    def __post_init__(self) -> None:
        if not self.description_text:
            raise ValidationError("TaskSpec.description_text must be non-empty")
        is_code = self.family is TaskFamily.CODE
        if is_code != (self.metric is Metric.PASS_AT_1) or is_code != (self.entry_point is not None):
            raise ValidationError(
                "code family, pass_at_1 metric and entry_point must appear together"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "family": self.family.value,
            "description_text": self.description_text,
            "metric": self.metric.value,
            "answer_schema": self.answer_schema,
            "entry_point": self.entry_point,
            "dataset_ref": self.dataset_ref,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TaskSpec":
        return cls(
            id=d["id"],
            family=TaskFamily(d["family"]),
            description_text=d["description_text"],
            metric=Metric(d["metric"]),
            answer_schema=d["answer_schema"],
            entry_point=d.get("entry_point"),
            dataset_ref=d.get("dataset_ref", ""),
        )


@dataclass(frozen=True)
class Sample:
    """One dataset record. The split assignment is stored, never recomputed."""

    input: str
    gold: str
    split: SampleSplit
    public_tests: tuple[str, ...] | None = None  # code tasks only

    def __post_init__(self) -> None:
        if self.public_tests is not None and len(self.public_tests) == 0:
            raise ValidationError("code samples must carry at least one public test")
        if self.public_tests is None and not self.gold:
            raise ValidationError("gold must be non-empty for non-code samples")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"input": self.input, "gold": self.gold, "split": self.split.value}
        if self.public_tests is not None:
            d["public_tests"] = list(self.public_tests)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Sample":
        tests = d.get("public_tests")
        return cls(
            input=d["input"],
            gold=d["gold"],
            split=SampleSplit(d["split"]),
            public_tests=tuple(tests) if tests is not None else None,
        )


@dataclass(frozen=True)
class WorkflowProgram:
    """Executable workflow source with its self-correction provenance."""

    source: str
    correction_attempts: int = 0  # 0..3
    origin: ProgramOrigin = ProgramOrigin.GENERATED

    def __post_init__(self) -> None:
        if not 0 <= self.correction_attempts <= 3:
            raise ValidationError("correction_attempts must be in 0..3")

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "correction_attempts": self.correction_attempts,
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WorkflowProgram":
        return cls(
            source=d["source"],
            correction_attempts=d["correction_attempts"],
            origin=ProgramOrigin(d["origin"]),
        )


_ENTRY_RE = re.compile(r"^\s*(?:async\s+)?def\s+workflow\s*\(", re.MULTILINE)


def validate_workflow_program(
    source: str,
    *,
    correction_attempts: int = 0,
    origin: ProgramOrigin = ProgramOrigin.GENERATED,
) -> WorkflowProgram:
    """Structurally validate workflow source (no execution).

    Accepts iff a ``workflow`` function taking two or three parameters is
    declared. Sources that do not parse are still accepted when the
    declaration is textually present: syntax errors surface at probe time,
    where the self-correction loop can fix them.
    """
    if not source or not source.strip():
        raise EmptySource("workflow source is empty")
    try:
        tree = ast.parse(source)
    except SyntaxError:
        if _ENTRY_RE.search(source):
            return WorkflowProgram(source, correction_attempts, origin)
        raise MissingEntryFunction("no `workflow` function declared") from None
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == "workflow":
            n_args = len(node.args.args) + len(node.args.posonlyargs)
            if n_args in (2, 3):
                return WorkflowProgram(source, correction_attempts, origin)
    raise MissingEntryFunction(
        "no `workflow` function with a two- or three-parameter interface declared"
    )


def validate_answer_dict(result: dict[str, Any]) -> str:
    """Return the canonical answer string of a workflow result map.

    Scalar ``answer`` values are coerced with ``str``; containers are a
    contract violation.
    """
    if not isinstance(result, dict) or "answer" not in result:
        raise MissingAnswerKey('workflow result lacks the mandatory "answer" key')
    value = result["answer"]
    if isinstance(value, (dict, list, tuple, set)):
        raise NonCoercibleValue(f'"answer" value of type {type(value).__name__} is not a scalar')
    return str(value)


@dataclass(frozen=True)
class AgentAction:
    """One meta-agent action: analysis text plus the workflow it produced."""

    analysis: str
    program: WorkflowProgram
    raw_response: str  # exactly what the policy emitted

    def __post_init__(self) -> None:
        if not self.analysis and self.program.origin is not ProgramOrigin.SEED:
            raise ValidationError("analysis may be empty only for seed actions")

    def to_dict(self) -> dict[str, Any]:
        return {
            "analysis": self.analysis,
            "program": self.program.to_dict(),
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AgentAction":
        return cls(
            analysis=d["analysis"],
            program=WorkflowProgram.from_dict(d["program"]),
            raw_response=d["raw_response"],
        )


@dataclass(frozen=True)
class CaseStudy:
    """A public-split failure shown back to the meta-agent."""

    input: str
    model_answer: str
    gold_answer: str

    def to_dict(self) -> dict[str, Any]:
        return {"input": self.input, "model_answer": self.model_answer, "gold_answer": self.gold_answer}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CaseStudy":
        return cls(d["input"], d["model_answer"], d["gold_answer"])


@dataclass(frozen=True)
class ExecStats:
    """Cost accounting for one workflow evaluation."""

    calls: int = 0  # executor LLM requests
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0

    def __add__(self, other: "ExecStats") -> "ExecStats":
        return ExecStats(
            self.calls + other.calls,
            self.tokens_in + other.tokens_in,
            self.tokens_out + other.tokens_out,
            self.wall_ms + other.wall_ms,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "calls": self.calls,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExecStats":
        return cls(d["calls"], d["tokens_in"], d["tokens_out"], d["wall_ms"])


@dataclass(frozen=True)
class Feedback:
    """Evaluation feedback: private-split score plus public-split failures."""

    score: float  # in [0, 1]
    case_studies: tuple[CaseStudy, ...] = ()
    failed: bool = False  # true iff the workflow never executed successfully
    exec_stats: ExecStats = field(default_factory=ExecStats)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"feedback score {self.score} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "score": self.score,
            "case_studies": [c.to_dict() for c in self.case_studies],
            "failed": self.failed,
            "exec_stats": self.exec_stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Feedback":
        return cls(
            score=d["score"],
            case_studies=tuple(CaseStudy.from_dict(c) for c in d["case_studies"]),
            failed=d["failed"],
            exec_stats=ExecStats.from_dict(d["exec_stats"]),
        )


HistoryEntry = tuple[WorkflowProgram, Feedback]


@dataclass(frozen=True)
class OptimizationState:
    """The MDP state: instructions, task and the in-window history."""

    instructions: str
    task: TaskSpec
    window_history: tuple[HistoryEntry, ...] = ()
    window_best: float = NO_SCORE  # max score in window, NO_SCORE when empty

    def __post_init__(self) -> None:
        for _, fb in self.window_history:
            if fb.failed:
                raise FailedFeedback("failed feedback can never enter a state history")
        expected = max((fb.score for _, fb in self.window_history), default=NO_SCORE)
        if self.window_best != expected:
            raise ValidationError(
                f"window_best {self.window_best} inconsistent with history max {expected}"
            )

    @property
    def last_score(self) -> float | None:
        """Score of the most recent history entry, None when empty."""
        if not self.window_history:
            return None
        return self.window_history[-1][1].score

    def to_dict(self) -> dict[str, Any]:
        return {
            "instructions": self.instructions,
            "task": self.task.to_dict(),
            "window_history": [
                {"program": p.to_dict(), "feedback": f.to_dict()} for p, f in self.window_history
            ],
            "window_best": None if math.isinf(self.window_best) else self.window_best,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OptimizationState":
        best = d["window_best"]
        return cls(
            instructions=d["instructions"],
            task=TaskSpec.from_dict(d["task"]),
            window_history=tuple(
                (WorkflowProgram.from_dict(e["program"]), Feedback.from_dict(e["feedback"]))
                for e in d["window_history"]
            ),
            window_best=NO_SCORE if best is None else best,
        )


REWARD_VALUES = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class TrajectoryStep:
    """One (state, action, reward) turn as serialized for training."""

    state_render: str  # exact prompt-rendered state
    action_text: str  # exact raw policy output (analysis + fenced program)
    reward: float  # in {0, 0.5, 1}
    score: float
    iteration: int = 0
    candidate: int = 0

    def __post_init__(self) -> None:
        if self.reward not in REWARD_VALUES:
            raise ValidationError(f"reward {self.reward} not in {REWARD_VALUES}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "state_render": self.state_render,
            "action_text": self.action_text,
            "reward": self.reward,
            "score": self.score,
            "iteration": self.iteration,
            "candidate": self.candidate,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrajectoryStep":
        return cls(
            state_render=d["state_render"],
            action_text=d["action_text"],
            reward=d["reward"],
            score=d["score"],
            iteration=d["iteration"],
            candidate=d["candidate"],
        )


@dataclass(frozen=True)
class Trajectory:
    """A 1- or 2-turn trajectory destined for the training dataset."""

    id: str
    steps: tuple[TrajectoryStep, ...]
    provenance: Provenance
    task_id: str = ""

    def __post_init__(self) -> None:
        if len(self.steps) not in (1, 2):
            raise ValidationError("trajectory length must be 1 or 2")
        if (len(self.steps) == 2) != (self.provenance is Provenance.SELECTED_PAIR):
            raise ValidationError("length-2 trajectories and selected_pair provenance must coincide")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "steps": [s.to_dict() for s in self.steps],
            "provenance": self.provenance.value,
            "task_id": self.task_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Trajectory":
        return cls(
            id=d["id"],
            steps=tuple(TrajectoryStep.from_dict(s) for s in d["steps"]),
            provenance=Provenance(d["provenance"]),
            task_id=d.get("task_id", ""),
        )


@dataclass(frozen=True)
class RunConfig:
    """Every hyperparameter of an optimization/collection run."""

    m: int = 5  # candidate actions per collect iteration
    tau: float = 0.4  # reward-scaling temperature for exported weights
    horizon: int = 2  # fixed in this release, carried for forward compat
    iterations: int = 10
    meta_temperature_infer: float = 0.5
    meta_temperature_collect: float = 0.8
    filter_threshold: float = 0.05  # candidates scoring below are excluded
    case_study_k: int = 3
    workflow_timeout_ms: int = 120_000
    exec_code_timeout_ms: int = 10_000
    helper_call_limit: int = 64  # per workflow invocation
    eval_workers: int = 1
    seed: int = 0
    case_input_budget: int = 1500  # per-case-study render budget (chars)
    case_answer_budget: int = 500
    seed_workflow: str = ""  # path to an optional starting workflow source
    meta_backend: BackendSpec = field(default_factory=lambda: BackendSpec.mock("scenario.json"))
    executor_backend: BackendSpec = field(default_factory=lambda: BackendSpec.mock("executor.json"))

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValidationError("m must be >= 1")
        if self.tau <= 0:
            raise ValidationError("tau must be > 0")
        if self.horizon != 2:
            raise ValidationError("horizon is fixed at 2 in this release")
        positive = (
            self.iterations,
            self.meta_temperature_infer,
            self.meta_temperature_collect,
            self.case_study_k,
            self.workflow_timeout_ms,
            self.exec_code_timeout_ms,
            self.helper_call_limit,
            self.eval_workers,
            self.case_input_budget,
            self.case_answer_budget,
        )
        if any(v <= 0 for v in positive):
            raise ValidationError("all run hyperparameters must be positive")
        if not 0.0 <= self.filter_threshold <= 1.0:
            raise ValidationError("filter_threshold must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "tau": self.tau,
            "horizon": self.horizon,
            "iterations": self.iterations,
            "meta_temperature_infer": self.meta_temperature_infer,
            "meta_temperature_collect": self.meta_temperature_collect,
            "filter_threshold": self.filter_threshold,
            "case_study_k": self.case_study_k,
            "workflow_timeout_ms": self.workflow_timeout_ms,
            "exec_code_timeout_ms": self.exec_code_timeout_ms,
            "helper_call_limit": self.helper_call_limit,
            "eval_workers": self.eval_workers,
            "seed": self.seed,
            "case_input_budget": self.case_input_budget,
            "case_answer_budget": self.case_answer_budget,
            "seed_workflow": self.seed_workflow,
            "meta_backend": self.meta_backend.to_dict(),
            "executor_backend": self.executor_backend.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        kwargs = dict(d)
        kwargs["meta_backend"] = BackendSpec.from_dict(d["meta_backend"])
        kwargs["executor_backend"] = BackendSpec.from_dict(d["executor_backend"])
        return cls(**kwargs)


# --- dataset files -----------------------------------------------------------


def load_dataset(path: str | Path) -> list[Sample]:
    """Read a newline-delimited dataset file (one sample per line, UTF-8)."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(Sample.from_dict(json.loads(line)))
    return samples


def save_dataset(samples: list[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
