"""Helper-API implementations served to live workflow invocations.

The text helpers (`extract_answer_str`, `extract_code_block`) are pure
functions, importable directly. The LLM-backed and code-running helpers live
on HelperServer, which binds an executor backend, the current sample, and
budgets, and reports per-call cost meters for accounting.
"""

from __future__ import annotations

import json
import re
from typing import Any

from ..backends import CompletionBatch
from ..errors import NoMatchingBlock, NotACodeTask, WorkflowOptError, error_kind
from ..gateway import find_code_blocks
from ..model import Sample
from .nested import run_nested

HELPER_NAMES = frozenset(
    {
        "call_llm",
        "call_json_format_llm",
        "execute_code",
        "extract_answer_str",
        "extract_code_block",
        "test_on_public_test",
    }
)

_NUMBER_RE = re.compile(r"-?\d+(?:,\d{3})*(?:\.\d+)?(?:[eE][-+]?\d+)?")
_STRIP_TRAIL = " \t\r\n*_\"'`.,;:!?"
_STRIP_LEAD = " \t\r\n*_\"'`:"


def _last_boxed(text: str) -> str | None:
    start = text.rfind("\\boxed{")
    if start < 0:
        return None
    depth = 0
    for i in range(start + len("\\boxed"), len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start + len("\\boxed{") : i]
    return None


def extract_answer_str(response: str) -> str:
    """Pull the most answer-looking span out of free-form model text.

    Precedence: last \\boxed{...}; text after the last "answer is"; the last
    numeric literal; the whole trimmed string. Total on all inputs.
    """
    text = str(response)
    boxed = _last_boxed(text)
    if boxed is not None:
        return boxed.strip()
    matches = list(re.finditer(r"answer\s+is", text, re.IGNORECASE))
    if matches:
        tail = text[matches[-1].end() :].split("\n", 1)[0]
        tail = tail.lstrip(_STRIP_LEAD).rstrip(_STRIP_TRAIL)
        if tail:
            return tail
    numbers = _NUMBER_RE.findall(text)
    if numbers:
        return numbers[-1]
    return text.strip()


def extract_code_block(response: str, entry_point: str = "solution") -> str:
    """Last fenced block defining `def <entry_point>`; raises NoMatchingBlock."""
    if not entry_point:
        raise NoMatchingBlock("entry_point must be non-empty")
    blocks, _ = find_code_blocks(str(response))
    needle = f"def {entry_point}"
    for body in reversed(blocks):
        if needle in body:
            return body
    raise NoMatchingBlock(f"no fenced code block defines `{needle}`")


def _code_or_block(text: str, entry_point: str) -> str | None:
    """Best-effort code extraction: fenced block first, then bare source."""
    try:
        return extract_code_block(text, entry_point)
    except NoMatchingBlock:
        return text if f"def {entry_point}" in text else None


def parse_json_object(text: str) -> dict[str, Any] | None:
    """Tolerant JSON-object read: direct, fenced, or first balanced braces."""
    candidates = [text.strip()]
    blocks, _ = find_code_blocks(text)
    candidates.extend(b.strip() for b in blocks)
    start = text.find("{")
    if start >= 0:
        depth = 0
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    candidates.append(text[start : i + 1])
                    break
    for cand in candidates:
        try:
            value = json.loads(cand)
        except ValueError:
            continue
        if isinstance(value, dict):
            return value
    return None


class Meters:
    """Mutable per-call cost counters."""

    def __init__(self) -> None:
        self.llm_requests = 0
        self.tokens_in = 0
        self.tokens_out = 0

    def add(self, batch: CompletionBatch) -> CompletionBatch:
        self.llm_requests += 1
        self.tokens_in += batch.tokens_in
        self.tokens_out += batch.tokens_out
        return batch


class HelperServer:
    """Dispatches helper requests for one workflow invocation."""

    def __init__(
        self,
        executor,
        *,
        sample: Sample | None = None,
        entry_point: str | None = None,
        exec_code_timeout_s: float = 10.0,
        replay_records: list | None = None,
    ):
        self.executor = executor
        self.sample = sample
        self.entry_point = entry_point
        self.exec_code_timeout_s = exec_code_timeout_s

    def serve(self, name: str, args: dict[str, Any]) -> tuple[dict[str, Any], Meters]:
        """Handle one helper request; never raises.

        Returns the reply params (``{"ok": true, "result": ...}`` or
        ``{"ok": false, "error": {...}}``) plus the cost meters.
        """
        meters = Meters()
        if name not in HELPER_NAMES:
            return {"ok": False, "error": {"kind": "UnknownHelper", "message": f"no helper named {name!r}"}}, meters
        try:
            handler = getattr(self, f"_{name}")
            result = handler(dict(args), meters)
        except (TypeError, KeyError, ValueError) as exc:
            return (
                {"ok": False, "error": {"kind": "HelperArgumentError", "message": f"{name}: {exc}"}},
                meters,
            )
        except WorkflowOptError as exc:
            kind = "ExecutorUnavailable" if _is_transport(exc) else error_kind(exc)
            return {"ok": False, "error": {"kind": kind, "message": str(exc)}}, meters
        except _HelperFailure as exc:
            return {"ok": False, "error": {"kind": exc.kind, "message": exc.message}}, meters
        return {"ok": True, "result": result}, meters

    # --- LLM helpers ---------------------------------------------------------

    def _compose(self, args: dict[str, Any], extra_instruction: str = "") -> list[dict[str, str]]:
        messages = [dict(m) for m in args.get("messages", [])]
        parts = []
        role = str(args.get("agent_role", "") or "")
        if role:
            parts.append(f"You are a {role}.")
        instructions = str(args.get("instructions", "") or "")
        if instructions:
            parts.append(instructions)
        if extra_instruction:
            parts.append(extra_instruction)
        if parts:
            messages.insert(0, {"role": "system", "content": "\n\n".join(parts)})
        return messages

    def _call_llm(self, args: dict[str, Any], meters: Meters) -> list[str]:
        n = max(1, int(args.get("num_of_response", 1)))
        temperature = float(args.get("temperature", 0.5))
        batch = meters.add(self.executor.complete(self._compose(args), temperature, n))
        return list(batch.texts)

    def _call_json_format_llm(self, args: dict[str, Any], meters: Meters) -> list[dict[str, Any]]:
        keys = list(args.get("return_dict_keys", []))
        if not keys:
            raise ValueError("return_dict_keys must be non-empty")
        n = max(1, int(args.get("num_of_response", 1)))
        temperature = float(args.get("temperature", 0.5))
        keys_text = ", ".join(f'"{k}"' for k in keys)
        extra = (
            f"Reply with a JSON object containing exactly these keys: {keys_text}. "
            "Output only the JSON object."
        )
        composed = self._compose(args, extra)
        batch = meters.add(self.executor.complete(composed, temperature, n))
        out: list[dict[str, Any]] = []
        for text in batch.texts:
            parsed = parse_json_object(text)
            if parsed is None:
                repair = composed + [
                    {"role": "assistant", "content": text},
                    {
                        "role": "user",
                        "content": (
                            "Your previous reply was not a bare JSON object. Reply again with "
                            f"ONLY a JSON object containing exactly these keys: {keys_text}."
                        ),
                    },
                ]
                retry = meters.add(self.executor.complete(repair, temperature, 1))
                parsed = parse_json_object(retry.texts[0])
            if parsed is None:
                parsed = {}
            for key in keys:
                parsed.setdefault(key, "")
            out.append(parsed)
        return out

    # --- code helpers -----------------------------------------------------------

    def _execute_code(self, args: dict[str, Any], meters: Meters) -> Any:
        res = run_nested(str(args.get("code", "")), mode="solution", timeout_s=self.exec_code_timeout_s)
        if not res.ok:
            raise _HelperFailure(res.kind, res.message)
        return res.value

    def _extract_answer_str(self, args: dict[str, Any], meters: Meters) -> str:
        return extract_answer_str(str(args.get("response", "")))

    def _extract_code_block(self, args: dict[str, Any], meters: Meters) -> str:
        return extract_code_block(
            str(args.get("response", "")), str(args.get("entry_point", "solution") or "solution")
        )

    def _test_on_public_test(self, args: dict[str, Any], meters: Meters) -> dict[str, Any]:
        if self.sample is None or not self.sample.public_tests:
            raise NotACodeTask("the current sample carries no public tests")
        task_text = str(args.get("task", ""))
        entry = str(args.get("entry_point") or self.entry_point or "solution")
        loop = max(1, int(args.get("test_loop", 1)))
        code = _code_or_block(str(args.get("solution_code", "")), entry) or str(
            args.get("solution_code", "")
        )
        feedback = ""
        for round_no in range(loop):
            res = run_nested(
                code,
                mode="tests",
                tests=self.sample.public_tests,
                entry_point=entry,
                timeout_s=self.exec_code_timeout_s,
            )
            if res.ok:
                return {"result": True, "solution": code, "feedback": ""}
            feedback = res.message
            if round_no + 1 < loop:
                prompt = (
                    f"Task:\n{task_text}\n\nCurrent solution:\n```python\n{code}\n```\n\n"
                    f"It failed the public tests:\n{feedback}\n\n"
                    f"Rewrite the complete corrected function `{entry}`. "
                    "Reply with a single Python code block."
                )
                batch = meters.add(
                    self.executor.complete(
                        [
                            {"role": "system", "content": "You are a Python Programmer."},
                            {"role": "user", "content": prompt},
                        ],
                        0.0,
                        1,
                    )
                )
                repaired = _code_or_block(batch.texts[0], entry)
                if repaired:
                    code = repaired
        return {"result": False, "solution": code, "feedback": feedback}


class _HelperFailure(Exception):
    """Internal: helper outcome that must surface as a workflow exception."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


def _is_transport(exc: WorkflowOptError) -> bool:
    from ..errors import BackendUnavailable, ScenarioExhausted

    return isinstance(exc, (BackendUnavailable, ScenarioExhausted))
