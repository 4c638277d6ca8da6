"""Chat-completion backends.

Two families: an HTTP client for real chat-completions endpoints, and
deterministic mocks for tests and offline runs. Mocks come in two flavors,
chosen by the scenario file's shape:

* ``{"steps": [...]}``  -- ordered scripted steps. Each distinct message list
  is assigned the next unassigned step on first sight and keeps it forever,
  so output is a pure function of (scenario, message hash, sample index).
* ``{"rules": [...]}``  -- stateless substring rules, intended for the
  executor side where workflows issue open-ended calls.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Any

from .errors import BackendUnavailable, ScenarioExhausted, ValidationError

WireMessages = list[dict[str, str]]  # [{"role": ..., "content": ...}, ...]


def estimate_tokens(text: str) -> int:
    """Cheap deterministic token estimate used when no usage data exists."""
    return max(1, len(text) // 4)


@dataclass(frozen=True)
class BackendSpec:
    """Declarative description of a chat backend; realized by build_backend."""

    kind: str  # "mock" | "http_chat"
    model: str = ""
    endpoint: str = ""
    scenario_path: str = ""  # mock only
    timeout_s: float = 60.0
    retries: int = 2
    api_key_env: str = "WFOPT_API_KEY"  # env var NAME, never the key itself

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http_chat"):
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "mock" and not self.scenario_path:
            raise ValidationError("mock backend requires scenario_path")
        if self.kind == "http_chat" and not self.endpoint:
            raise ValidationError("http_chat backend requires endpoint")
        if self.retries < 0:
            raise ValidationError("retries must be >= 0")

    @classmethod
    def mock(cls, scenario_path: str) -> "BackendSpec":
        return cls(kind="mock", scenario_path=scenario_path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "model": self.model,
            "endpoint": self.endpoint,
            "scenario_path": self.scenario_path,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "api_key_env": self.api_key_env,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BackendSpec":
        return cls(**d)


@dataclass(frozen=True)
class CompletionBatch:
    """One backend request's worth of completions plus its cost."""

    texts: tuple[str, ...]
    tokens_in: int
    tokens_out: int


def _messages_key(messages: WireMessages) -> str:
    blob = json.dumps(messages, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _request_tokens(messages: WireMessages) -> int:
    return sum(estimate_tokens(m.get("content", "")) for m in messages)


class ScenarioBackend:
    """Scripted stepwise mock. Steps are consumed in first-sight order of
    distinct message lists; repeat calls with the same messages replay the
    same step, which keeps the backend a pure function of its inputs."""

    def __init__(self, scenario: dict[str, Any]):
        self.scenario = scenario
        self.steps: list[dict[str, Any]] = list(scenario.get("steps", []))
        self._assigned: dict[str, int] = {}
        self._next = 0
        self._lock = threading.Lock()

    def complete(self, messages: WireMessages, temperature: float, n: int) -> CompletionBatch:
        if n < 1:
            raise ValidationError("n must be >= 1")
        key = _messages_key(messages)
        with self._lock:
            idx = self._assigned.get(key)
            if idx is None:
                idx = self._next
                self._assigned[key] = idx
                self._next += 1
        if idx >= len(self.steps):
            raise ScenarioExhausted(f"scenario has {len(self.steps)} steps, need step {idx + 1}")
        responses = self.steps[idx].get("responses", [])
        if n > len(responses):
            raise ScenarioExhausted(f"step {idx} scripts {len(responses)} responses, asked for {n}")
        texts = tuple(responses[:n])
        return CompletionBatch(
            texts=texts,
            tokens_in=_request_tokens(messages),
            tokens_out=sum(estimate_tokens(t) for t in texts),
        )


class RuleBackend:
    """Stateless substring-rule mock: the first rule whose `contains` string
    occurs in the concatenated message contents supplies the responses.
    Responses cycle when fewer are scripted than requested."""

    def __init__(self, scenario: dict[str, Any]):
        self.scenario = scenario
        self.rules: list[dict[str, Any]] = list(scenario.get("rules", []))
        self.default = scenario.get("default_response", "")

    def complete(self, messages: WireMessages, temperature: float, n: int) -> CompletionBatch:
        if n < 1:
            raise ValidationError("n must be >= 1")
        haystack = "\n".join(m.get("content", "") for m in messages)
        responses: list[str] = [self.default]
        for rule in self.rules:
            if rule["contains"] in haystack:
                responses = list(rule.get("responses") or [rule.get("response", "")])
                break
        texts = tuple(responses[i % len(responses)] for i in range(n))
        return CompletionBatch(
            texts=texts,
            tokens_in=_request_tokens(messages),
            tokens_out=sum(estimate_tokens(t) for t in texts),
        )


_RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


class HttpChatBackend:
    """Minimal chat-completions client with bounded retries."""

    def __init__(self, spec: BackendSpec):
        import requests  # deferred so offline use never needs it

        self.spec = spec
        self._session = requests.Session()
        self._requests = requests

    def complete(self, messages: WireMessages, temperature: float, n: int) -> CompletionBatch:
        if n < 1:
            raise ValidationError("n must be >= 1")
        key = os.environ.get(self.spec.api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {
            "model": self.spec.model,
            "messages": messages,
            "temperature": temperature,
            "n": n,
        }
        last_error = "no attempt made"
        for attempt in range(self.spec.retries + 1):
            try:
                resp = self._session.post(
                    self.spec.endpoint, json=payload, headers=headers, timeout=self.spec.timeout_s
                )
            except self._requests.RequestException as exc:
                last_error = f"transport: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp.json(), messages)
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in _RETRYABLE_STATUS:
                    break
            if attempt < self.spec.retries:
                time.sleep(min(2.0, 0.2 * 2**attempt))
        raise BackendUnavailable(f"{self.spec.endpoint}: {last_error}")

    def _parse(self, data: dict[str, Any], messages: WireMessages) -> CompletionBatch:
        try:
            texts = tuple(c["message"]["content"] for c in data["choices"])
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion payload: {exc}") from None
        usage = data.get("usage", {})
        return CompletionBatch(
            texts=texts,
            tokens_in=int(usage.get("prompt_tokens", _request_tokens(messages))),
            tokens_out=int(
                usage.get("completion_tokens", sum(estimate_tokens(t) for t in texts))
            ),
        )


def load_scenario(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise BackendUnavailable(f"cannot read scenario {path}: {exc}") from None


def build_backend(spec: BackendSpec):
    """Instantiate the backend a spec describes."""
    if spec.kind == "http_chat":
        return HttpChatBackend(spec)
    scenario = load_scenario(spec.scenario_path)
    if "rules" in scenario:
        return RuleBackend(scenario)
    return ScenarioBackend(scenario)
