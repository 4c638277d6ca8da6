"""The `agent` object handed to workflow code.

Every method serializes one helper request frame, then blocks until the reply
with the matching id arrives. Replies for other ids that show up in the
meantime are buffered, so reply order never matters. Host-side errors are
re-raised locally as exception classes named after the error kind, letting
workflow code catch e.g. `NestedTimeout` by name via `type(exc).__name__`.
"""

from __future__ import annotations

from typing import Any

from .channel import Channel


class HelperError(Exception):
    """Base class for errors the host returned for a helper call."""


_ERROR_CLASSES: dict[str, type] = {}


def error_class(kind: str) -> type:
    """Exception type whose name is the host's error kind."""
    cls = _ERROR_CLASSES.get(kind)
    if cls is None:
        safe = kind if kind.isidentifier() else "HelperError"
        cls = type(safe, (HelperError,), {})
        _ERROR_CLASSES[kind] = cls
    return cls


class Agent:
    def __init__(self, channel: Channel):
        self._channel = channel
        self._counter = 0
        self._pending: dict[str, dict[str, Any]] = {}

    # -- plumbing --------------------------------------------------------

    def _call(self, name: str, args: dict[str, Any]) -> Any:
        self._counter += 1
        frame_id = f"h{self._counter}"
        self._channel.write_frame(
            {"id": frame_id, "method": "helper", "params": {"name": name, "args": args}}
        )
        reply = self._wait_for(frame_id)
        if reply.get("ok"):
            return reply.get("result")
        error = reply.get("error") or {}
        raise error_class(str(error.get("kind", "HelperError")))(str(error.get("message", "")))

    def _wait_for(self, frame_id: str) -> dict[str, Any]:
        if frame_id in self._pending:
            return self._pending.pop(frame_id)
        while True:
            frame = self._channel.read_frame()
            got = frame.get("id")
            if got == frame_id:
                return frame
            if got is not None:
                self._pending[str(got)] = frame

    # -- helper API --------------------------------------------------------

    def call_llm(
        self,
        messages: list[dict[str, str]] | None = None,
        temperature: float = 0.5,
        num_of_response: int = 1,
        agent_role: str = "",
        instructions: str = "",
    ) -> list[str]:
        return self._call(
            "call_llm",
            {
                "messages": messages or [],
                "temperature": temperature,
                "num_of_response": num_of_response,
                "agent_role": agent_role,
                "instructions": instructions,
            },
        )

    def call_json_format_llm(
        self,
        messages: list[dict[str, str]] | None = None,
        temperature: float = 0.5,
        num_of_response: int = 1,
        agent_role: str = "",
        return_dict_keys: list[str] | None = None,
        instructions: str = "",
    ) -> list[dict[str, Any]]:
        return self._call(
            "call_json_format_llm",
            {
                "messages": messages or [],
                "temperature": temperature,
                "num_of_response": num_of_response,
                "agent_role": agent_role,
                "return_dict_keys": return_dict_keys or [],
                "instructions": instructions,
            },
        )

    def execute_code(self, code: str) -> Any:
        return self._call("execute_code", {"code": code})

    def extract_answer_str(self, response: str) -> str:
        return self._call("extract_answer_str", {"response": response})

    def extract_code_block(self, response: str, entry_point: str = "solution") -> str:
        return self._call(
            "extract_code_block", {"response": response, "entry_point": entry_point}
        )

    def test_on_public_test(
        self,
        task: str,
        solution_code: str,
        entry_point: str = "solution",
        test_loop: int = 1,
    ) -> dict[str, Any]:
        return self._call(
            "test_on_public_test",
            {
                "task": task,
                "solution_code": solution_code,
                "entry_point": entry_point,
                "test_loop": test_loop,
            },
        )

    def __getattr__(self, name: str) -> Any:
        # Unknown helpers still round-trip so the host can answer with its
        # own UnknownHelper error; dunder lookups stay local.
        if name.startswith("_"):
            raise AttributeError(name)

        def generic(*args: Any, **kwargs: Any) -> Any:
            payload = dict(kwargs)
            if args:
                payload["args"] = list(args)
            return self._call(name, payload)

        return generic
