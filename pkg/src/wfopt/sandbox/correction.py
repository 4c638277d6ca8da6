"""Self-correction loop: probe a workflow on one sample, feed execution
errors back to the meta-agent, accept the first structurally valid run.

Success means the probe produced a contract-valid answer dict; answer
correctness is never checked here. After three failed correction prompts the
candidate is skipped and leaves no trace in the optimization history.
"""

from __future__ import annotations

from typing import Callable

from ..errors import EmptySource, MissingEntryFunction
from ..gateway import Message, MessageList, MetaGateway, Role, find_code_blocks
from ..model import ProgramOrigin, WorkflowProgram, validate_workflow_program
from .host import ErrorInfo, WorkflowResult

MAX_CORRECTIONS = 3


class Skip:
    """Sentinel: the candidate could not be made to execute and is dropped."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "SKIP"


SKIP = Skip()


def format_error_report(error: ErrorInfo) -> str:
    report = f"{error.kind}: {error.message}" if error.message else error.kind
    if error.trace:
        report += f"\nTraceback (most recent frames):\n{error.trace}"
    return report


def extract_program(text: str) -> WorkflowProgram | None:
    """Lenient program extraction for correction replies (no analysis needed)."""
    blocks, _ = find_code_blocks(text)
    for body in reversed(blocks):
        try:
            return validate_workflow_program(body)
        except (EmptySource, MissingEntryFunction):
            continue
    return None


def probe_and_correct(
    program: WorkflowProgram,
    conversation: MessageList,
    gateway: MetaGateway,
    probe: Callable[[WorkflowProgram, int], WorkflowResult],
    *,
    temperature: float = 0.5,
    max_corrections: int = MAX_CORRECTIONS,
) -> WorkflowProgram | Skip:
    """Return an executable program (correction_attempts set) or SKIP.

    `probe` runs a candidate program on the fixed probe sample; its int
    argument is the number of corrections already consumed (for invocation
    ids). At most `max_corrections` correction prompts are ever sent.
    """
    current = program
    convo = conversation
    corrections = 0
    pending_report: str | None = None
    while True:
        if pending_report is None:
            result = probe(current, corrections)
            if result.ok:
                if corrections == 0:
                    return current
                return WorkflowProgram(current.source, corrections, ProgramOrigin.CORRECTED)
            pending_report = format_error_report(result.error)
        if corrections >= max_corrections:
            return SKIP
        convo = gateway.render_correction_prompt(current, pending_report, convo)
        corrections += 1
        reply = gateway.complete(convo, temperature, 1)[0]
        convo = convo + (Message(Role.ASSISTANT, reply),)
        fixed = extract_program(reply)
        if fixed is None:
            # Unusable reply burns the attempt; no point re-probing old code.
            pending_report = (
                "The previous reply did not contain a valid `workflow` function "
                "in a Python code block."
            )
            continue
        current = fixed
        pending_report = None
