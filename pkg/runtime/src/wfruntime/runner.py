"""Compile and invoke one workflow function, normalizing every outcome."""

from __future__ import annotations

import inspect
import json
import os
import traceback
from typing import Any

from .proxy import Agent


class ReturnTypeError(Exception):
    """The workflow returned something other than a dict."""


class UnserializableResult(Exception):
    """The returned dict cannot be carried over the JSON protocol."""


MAX_TRACE_FRAMES = 10


def format_error(exc: BaseException) -> dict[str, str]:
    """Error report for the done frame: kind, message, redacted short trace."""
    frames = traceback.extract_tb(exc.__traceback__)[-MAX_TRACE_FRAMES:]
    lines = []
    for frame in frames:
        name = os.path.basename(frame.filename)
        lines.append(f'  File "{name}", line {frame.lineno}, in {frame.name}')
        if frame.line:
            lines.append(f"    {frame.line}")
    return {
        "kind": type(exc).__name__,
        "message": str(exc),
        "trace": "\n".join(lines),
    }


def run_workflow(
    source: str, task: str, agent: Agent, entry_point: str | None = None
) -> dict[str, Any]:
    """Execute `workflow(agent, task[, entry_point])` from source text.

    Returns the workflow's dict; raises on any failure (the caller turns the
    exception into an error done frame).
    """
    code = compile(source, "<workflow>", "exec")
    namespace: dict[str, Any] = {"__name__": "__workflow__", "__builtins__": __builtins__}
    exec(code, namespace)
    fn = namespace.get("workflow")
    if not callable(fn):
        raise NameError("source defines no callable named `workflow`")
    params = [
        p
        for p in inspect.signature(fn).parameters.values()
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)
    ]
    if len(params) == 3:
        result = fn(agent, task, entry_point if entry_point is not None else "solution")
    elif len(params) == 2:
        result = fn(agent, task)
    else:
        raise TypeError(
            f"workflow must take (agent, task) or (agent, task, entry_point), got {len(params)} parameters"
        )
    if not isinstance(result, dict):
        raise ReturnTypeError(f"workflow returned {type(result).__name__}, expected dict")
    try:
        json.dumps(result)
    except (TypeError, ValueError) as exc:
        raise UnserializableResult(f"workflow result is not JSON-serializable: {exc}") from exc
    return result
