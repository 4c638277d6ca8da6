"""Meta-agent gateway: prompt rendering, backend calls, response parsing.

Rendering is pure; the only stateful pieces are the backend itself and the
usage counters. Fences are emitted with dynamic length (one backtick longer
than any run inside the embedded source) and parsed with matching-or-longer
closers, so render -> parse round-trips survive sources that themselves
contain fenced blocks.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .backends import BackendSpec, CompletionBatch, build_backend
from .errors import (
    ConfigError,
    EmptySource,
    MissingEntryFunction,
    NoCodeBlock,
    TemplateMissingPlaceholder,
    ValidationError,
)
from .model import AgentAction, OptimizationState, WorkflowProgram, validate_workflow_program


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValidationError("message content must be non-empty")


MessageList = tuple[Message, ...]


def validate_messages(messages: MessageList) -> MessageList:
    if not messages or messages[0].role is not Role.SYSTEM:
        raise ValidationError("first message must have role=system")
    return messages


def to_wire(messages: MessageList) -> list[dict[str, str]]:
    return [{"role": m.role.value, "content": m.content} for m in messages]


# --- templates ----------------------------------------------------------------

_TEMPLATE_FILES = {
    "system": "system.txt",
    "main": "main.txt",
    "correction": "correction.txt",
    "helper_docs": "helper_docs.txt",
}


@dataclass(frozen=True)
class Templates:
    system: str
    main: str
    correction: str
    helper_docs: str

    def __post_init__(self) -> None:
        for placeholder in ("[APIs]", "[TASK]", "[HISTORY]"):
            if placeholder not in self.main:
                raise TemplateMissingPlaceholder(f"main template lacks {placeholder}")
        if "[ERROR]" not in self.correction:
            raise TemplateMissingPlaceholder("correction template lacks [ERROR]")


def load_templates(directory: str | Path | None = None) -> Templates:
    """Load prompt templates from a directory, or the packaged defaults."""
    texts = {}
    if directory is None:
        from importlib import resources

        root = resources.files("wfopt.templates")
        for key, fname in _TEMPLATE_FILES.items():
            texts[key] = root.joinpath(fname).read_text(encoding="utf-8")
    else:
        root = Path(directory)
        for key, fname in _TEMPLATE_FILES.items():
            path = root / fname
            if not path.is_file():
                raise ConfigError(f"template file missing: {path}")
            texts[key] = path.read_text(encoding="utf-8")
    return Templates(**texts)


# --- fenced code blocks ---------------------------------------------------------

_FENCE_OPEN_RE = re.compile(r"^(`{3,})([^`\n]*)[ \t]*$")


def find_code_blocks(text: str) -> tuple[list[str], int]:
    """Return (block bodies in order, char offset of the first opening fence).

    A block closes at the next line of only backticks at least as long as its
    opening fence; an unclosed trailing fence is ignored.
    """
    lines = text.split("\n")
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line) + 1
    blocks: list[str] = []
    first_offset = len(text)
    i = 0
    while i < len(lines):
        m = _FENCE_OPEN_RE.match(lines[i])
        if not m:
            i += 1
            continue
        fence = m.group(1)
        open_offset = offsets[i]
        body: list[str] = []
        j = i + 1
        closed = False
        while j < len(lines):
            stripped = lines[j].rstrip()
            if stripped and set(stripped) == {"`"} and len(stripped) >= len(fence):
                closed = True
                break
            body.append(lines[j])
            j += 1
        if closed:
            blocks.append("\n".join(body))
            first_offset = min(first_offset, open_offset)
            i = j + 1
        else:
            i += 1
    return blocks, first_offset


def make_fence(source: str) -> str:
    """A fence strictly longer than any backtick run inside the source."""
    longest = max((len(run) for run in re.findall(r"`+", source)), default=0)
    return "`" * max(3, longest + 1)


def collapse_fences(text: str) -> str:
    """Defuse fence-capable backtick runs so embedded reports cannot open or
    close a code block in the surrounding template."""
    return re.sub(r"`{3,}", "``", text)


def fenced(source: str, info: str = "python") -> str:
    fence = make_fence(source)
    return f"{fence}{info}\n{source}\n{fence}"


# --- prompt rendering -----------------------------------------------------------

TRUNCATION_MARKER = "... [truncated]"
EMPTY_HISTORY_TEXT = "(no prior systems)"


def clip(text: str, budget: int) -> str:
    """Truncate to at most `budget` chars, marking the cut."""
    if len(text) <= budget:
        return text
    if budget <= len(TRUNCATION_MARKER):
        return text[:budget]
    return text[: budget - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


def render_history(
    state: OptimizationState, *, case_input_budget: int = 1500, case_answer_budget: int = 500
) -> str:
    if not state.window_history:
        return EMPTY_HISTORY_TEXT
    parts: list[str] = []
    for n, (program, feedback) in enumerate(state.window_history, start=1):
        lines = [
            f"## System {n}",
            "system code:",
            fenced(program.source),
            "eval_feedback:",
            f"Validation accuracy: {feedback.score:.3f}",
        ]
        if feedback.case_studies:
            lines.append("Failure cases on validation samples:")
            for c, case in enumerate(feedback.case_studies, start=1):
                lines.append(f"### Case {c}")
                lines.append(f"Input: {clip(case.input, case_input_budget)}")
                lines.append(f"Model answer: {clip(case.model_answer, case_answer_budget)}")
                lines.append(f"Correct answer: {clip(case.gold_answer, case_answer_budget)}")
        else:
            lines.append("Failure cases on validation samples: (none sampled)")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def render_state_prompt(
    state: OptimizationState,
    helper_docs: str | None = None,
    *,
    templates: Templates | None = None,
    case_input_budget: int = 1500,
    case_answer_budget: int = 500,
) -> MessageList:
    """Build the [system, user] conversation presenting the current state."""
    templates = templates or load_templates()
    docs = templates.helper_docs if helper_docs is None else helper_docs
    history = render_history(
        state, case_input_budget=case_input_budget, case_answer_budget=case_answer_budget
    )
    body = (
        templates.main.replace("[APIs]", docs)
        .replace("[TASK]", state.task.description_text)
        .replace("[HISTORY]", history)
    )
    system_text = state.instructions or templates.system
    return (Message(Role.SYSTEM, system_text), Message(Role.USER, body))


def render_correction_prompt(
    program: WorkflowProgram,
    error_report: str,
    *,
    conversation: MessageList | None = None,
    templates: Templates | None = None,
) -> MessageList:
    """Append the fix-this-error turn to the meta conversation.

    Without a prior conversation a minimal one is synthesized so the model
    still sees the program it must repair.
    """
    templates = templates or load_templates()
    report = error_report.strip() or "(no message captured)"
    body = templates.correction.replace("[ERROR]", collapse_fences(report))
    if conversation is None:
        conversation = (
            Message(Role.SYSTEM, templates.system),
            Message(Role.ASSISTANT, fenced(program.source)),
        )
    return conversation + (Message(Role.USER, body),)


# --- response parsing ------------------------------------------------------------


def parse_action(response_text: str) -> AgentAction:
    """Split a policy response into analysis text plus its workflow program.

    The last fenced block declaring a valid `workflow` function wins; analysis
    is everything before the first fenced block.
    """
    blocks, first_offset = find_code_blocks(response_text)
    if not blocks:
        raise NoCodeBlock("response contains no fenced code block")
    analysis = response_text[:first_offset].strip()
    last_error: Exception | None = None
    for body in reversed(blocks):
        try:
            program = validate_workflow_program(body)
        except (EmptySource, MissingEntryFunction) as exc:
            last_error = exc
            continue
        return AgentAction(analysis=analysis, program=program, raw_response=response_text)
    raise MissingEntryFunction(
        f"no fenced block declares a valid workflow function ({last_error})"
    )


# --- backend completion ------------------------------------------------------------


def complete(backend, messages: MessageList, temperature: float, n: int) -> list[str]:
    """Request n completions for a conversation; returns exactly n texts."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    validate_messages(messages)
    if isinstance(backend, BackendSpec):
        backend = build_backend(backend)
    batch = backend.complete(to_wire(messages), temperature, n)
    return list(batch.texts)


@dataclass
class MetaUsage:
    """Mutable running totals of meta-backend cost."""

    calls: int = 0
    tokens_in: int = 0
    tokens_out: int = 0


class MetaGateway:
    """Bundles backend, templates, and render budgets for the engine."""

    def __init__(
        self,
        backend,
        templates: Templates | None = None,
        *,
        case_input_budget: int = 1500,
        case_answer_budget: int = 500,
    ):
        if isinstance(backend, BackendSpec):
            backend = build_backend(backend)
        self.backend = backend
        self.templates = templates or load_templates()
        self.case_input_budget = case_input_budget
        self.case_answer_budget = case_answer_budget
        self.usage = MetaUsage()
        self._lock = threading.Lock()

    def render_state_prompt(self, state: OptimizationState) -> MessageList:
        return render_state_prompt(
            state,
            templates=self.templates,
            case_input_budget=self.case_input_budget,
            case_answer_budget=self.case_answer_budget,
        )

    def render_correction_prompt(
        self, program: WorkflowProgram, error_report: str, conversation: MessageList | None = None
    ) -> MessageList:
        return render_correction_prompt(
            program, error_report, conversation=conversation, templates=self.templates
        )

    def parse_action(self, response_text: str) -> AgentAction:
        return parse_action(response_text)

    def complete_batch(self, messages: MessageList, temperature: float, n: int) -> CompletionBatch:
        validate_messages(messages)
        batch = self.backend.complete(to_wire(messages), temperature, n)
        with self._lock:
            self.usage.calls += 1
            self.usage.tokens_in += batch.tokens_in
            self.usage.tokens_out += batch.tokens_out
        return batch

    def complete(self, messages: MessageList, temperature: float, n: int) -> list[str]:
        return list(self.complete_batch(messages, temperature, n).texts)
