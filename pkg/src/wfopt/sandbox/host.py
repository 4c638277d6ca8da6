"""Sandbox host: supervises workflow execution in an isolated runtime process.

Protocol (newline-delimited JSON over the child's stdio, frames <= 4 MiB):
  host -> runtime  {"id", "method": "run_workflow", "params": {"source", "task", "entry_point"?}}
  runtime -> host  {"id", "method": "helper", "params": {"name", "args"}}
  host -> runtime  {"id", "ok": true, "result": ...} | {"id", "ok": false, "error": {"kind", "message"}}
  runtime -> host  {"id", "method": "done", "params": {"result" | "error"}}

In replay mode helper replies come from recorded call records instead of live
backends; the runtime still executes the workflow for real.
"""

from __future__ import annotations

import hashlib
import json
import queue
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from ..errors import ContractError, error_kind
from ..model import Sample, WorkflowProgram, validate_answer_dict
from .helpers import HelperServer, Meters
from .policy import scan_denied_imports

MAX_FRAME_BYTES = 4 * 1024 * 1024


@dataclass(frozen=True)
class ErrorInfo:
    kind: str
    message: str
    trace: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "message": self.message, "trace": self.trace}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ErrorInfo":
        return cls(d.get("kind", "UnknownError"), d.get("message", ""), d.get("trace", ""))


@dataclass(frozen=True)
class HelperCallRecord:
    """One served helper call, as persisted for accounting and replay."""

    invocation_id: str
    sequence_no: int  # 1-based, strictly increasing per invocation
    method: str
    request: dict[str, Any]
    response: dict[str, Any]  # the reply params sans id
    latency_ms: int
    tokens_in: int = 0
    tokens_out: int = 0
    llm_requests: int = 0  # executor requests this call triggered

    def to_dict(self) -> dict[str, Any]:
        return {
            "invocation_id": self.invocation_id,
            "sequence_no": self.sequence_no,
            "method": self.method,
            "request": self.request,
            "response": self.response,
            "latency_ms": self.latency_ms,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "llm_requests": self.llm_requests,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HelperCallRecord":
        return cls(
            invocation_id=d["invocation_id"],
            sequence_no=d["sequence_no"],
            method=d["method"],
            request=d["request"],
            response=d["response"],
            latency_ms=d["latency_ms"],
            tokens_in=d.get("tokens_in", 0),
            tokens_out=d.get("tokens_out", 0),
            llm_requests=d.get("llm_requests", 0),
        )


@dataclass(frozen=True)
class WorkflowResult:
    """Outcome of one workflow invocation: exactly one of answer or error."""

    answer: dict[str, Any] | None
    error: ErrorInfo | None
    helper_calls: tuple[HelperCallRecord, ...] = ()
    wall_ms: int = 0

    def __post_init__(self) -> None:
        if (self.answer is None) == (self.error is None):
            raise ValueError("exactly one of answer/error must be set")

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ReplaySource:
    """Recorded helper traffic substituted for live backends during replay."""

    records: tuple[HelperCallRecord, ...]
    wall_ms: int = 0


def invocation_seed(invocation_id: str) -> int:
    """Deterministic RNG seed for the runtime process."""
    return int(hashlib.sha256(invocation_id.encode("utf-8")).hexdigest()[:8], 16)


class _StreamDrain(threading.Thread):
    """Collects a pipe's output so the child never blocks on a full buffer."""

    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.chunks: list[str] = []
        self.start()

    def run(self) -> None:
        try:
            for line in self.stream:
                self.chunks.append(line)
        except ValueError:
            pass

    def text(self) -> str:
        return "".join(self.chunks)


class _FrameFeed(threading.Thread):
    """Pushes the child's stdout lines into a queue; None marks EOF."""

    def __init__(self, stream, out: queue.Queue):
        super().__init__(daemon=True)
        self.stream = stream
        self.out = out
        self.start()

    def run(self) -> None:
        try:
            for line in self.stream:
                self.out.put(line)
        except ValueError:
            pass
        self.out.put(None)


class SandboxHost:
    """Executes workflow programs in runtime subprocesses and serves helpers."""

    def __init__(
        self,
        executor,
        *,
        workflow_timeout_ms: int = 120_000,
        exec_code_timeout_ms: int = 10_000,
        helper_call_limit: int = 64,
        log: Callable[[dict[str, Any]], None] | None = None,
        runtime_cmd: list[str] | None = None,
    ):
        self.executor = executor
        self.workflow_timeout_ms = workflow_timeout_ms
        self.exec_code_timeout_ms = exec_code_timeout_ms
        self.helper_call_limit = helper_call_limit
        self.log = log
        self.runtime_cmd = runtime_cmd or [sys.executable, "-m", "wfruntime"]

    def execute_workflow(
        self,
        program: WorkflowProgram,
        sample: Sample,
        *,
        invocation_id: str,
        entry_point: str | None = None,
        timeout_ms: int | None = None,
        iteration: int = 0,
        candidate: int = 0,
        phase: str = "",
        replay: ReplaySource | None = None,
    ) -> WorkflowResult:
        """Run one program on one sample; all failures land in the outcome."""
        started = time.monotonic()
        records: list[HelperCallRecord] = []
        tags = {"invocation_id": invocation_id, "iteration": iteration, "candidate": candidate, "phase": phase}

        denied = scan_denied_imports(program.source)
        if denied:
            error = ErrorInfo("DeniedImport", f"workflow imports denied modules: {', '.join(denied)}")
            return self._finish(None, error, records, started, tags, replay)

        server = HelperServer(
            self.executor,
            sample=sample,
            entry_point=entry_point,
            exec_code_timeout_s=self.exec_code_timeout_ms / 1000.0,
        )
        timeout_s = (timeout_ms if timeout_ms is not None else self.workflow_timeout_ms) / 1000.0
        scratch = tempfile.mkdtemp(prefix="wfrun-")
        proc: subprocess.Popen | None = None
        answer: dict[str, Any] | None = None
        error: ErrorInfo | None = None
        try:
            try:
                proc = subprocess.Popen(
                    self.runtime_cmd
                    + ["--scratch", scratch, "--seed", str(invocation_seed(invocation_id))],
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                    cwd=scratch,
                )
            except OSError as exc:
                return self._finish(
                    None, ErrorInfo("RuntimeSpawnFailed", str(exc)), records, started, tags, replay
                )
            stderr_drain = _StreamDrain(proc.stderr)
            frames: queue.Queue = queue.Queue()
            _FrameFeed(proc.stdout, frames)

            run_params: dict[str, Any] = {"source": program.source, "task": sample.input}
            if entry_point is not None:
                run_params["entry_point"] = entry_point
            if not self._send(proc, {"id": "w0", "method": "run_workflow", "params": run_params}):
                return self._finish(
                    None,
                    ErrorInfo("RuntimeCrash", "runtime closed its stdin pipe before the job was sent"),
                    records,
                    started,
                    tags,
                    replay,
                )

            deadline = started + timeout_s
            seq = 0
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    error = ErrorInfo("Timeout", f"workflow exceeded {int(timeout_s * 1000)}ms")
                    break
                try:
                    line = frames.get(timeout=remaining)
                except queue.Empty:
                    error = ErrorInfo("Timeout", f"workflow exceeded {int(timeout_s * 1000)}ms")
                    break
                if line is None:
                    tail = stderr_drain.text()[-500:]
                    error = ErrorInfo("RuntimeCrash", f"runtime exited without a done frame: {tail}")
                    break
                if len(line.encode("utf-8", "replace")) > MAX_FRAME_BYTES:
                    error = ErrorInfo("ProtocolError", "frame exceeds 4 MiB")
                    break
                try:
                    frame = json.loads(line)
                except ValueError:
                    error = ErrorInfo("ProtocolError", f"undecodable frame: {line[:200]!r}")
                    break
                method = frame.get("method")
                if method == "helper":
                    seq += 1
                    record = self._serve(frame, seq, server, tags, replay, records)
                    records.append(record)
                    if self.log:
                        self.log({"event": "helper", **tags, **record.to_dict()})
                    if not self._send(proc, {"id": frame.get("id"), **record.response}):
                        error = ErrorInfo("RuntimeCrash", "runtime closed its pipe mid-reply")
                        break
                elif method == "done":
                    params = frame.get("params", {})
                    if "error" in params:
                        error = ErrorInfo.from_dict(params["error"])
                    else:
                        result = params.get("result")
                        try:
                            validate_answer_dict(result if isinstance(result, dict) else {})
                            answer = result
                        except ContractError as exc:
                            error = ErrorInfo("ContractViolation", f"{error_kind(exc)}: {exc}")
                    break
                else:
                    error = ErrorInfo("ProtocolError", f"unexpected method {method!r}")
                    break
            if error is None and answer is None:
                error = ErrorInfo("ProtocolError", "no outcome produced")
        finally:
            if proc is not None:
                # A timed-out child is busy-looping; waiting for it politely only
                # stretches the caller's deadline, so skip straight to the kill.
                self._reap(proc, graceful=error is None or error.kind != "Timeout")
            shutil.rmtree(scratch, ignore_errors=True)
        return self._finish(answer, error, records, started, tags, replay)

    # --- internals -----------------------------------------------------------

    def _serve(
        self,
        frame: dict[str, Any],
        seq: int,
        server: HelperServer,
        tags: dict[str, Any],
        replay: ReplaySource | None,
        records: list[HelperCallRecord],
    ) -> HelperCallRecord:
        params = frame.get("params", {})
        name = str(params.get("name", ""))
        args = params.get("args", {})
        if not isinstance(args, dict):
            args = {}
        if replay is not None:
            if seq <= len(replay.records):
                rec = replay.records[seq - 1]
                if rec.method == name:
                    return HelperCallRecord(
                        invocation_id=tags["invocation_id"],
                        sequence_no=seq,
                        method=name,
                        request=args,
                        response=rec.response,
                        latency_ms=rec.latency_ms,
                        tokens_in=rec.tokens_in,
                        tokens_out=rec.tokens_out,
                        llm_requests=rec.llm_requests,
                    )
                response = {
                    "ok": False,
                    "error": {
                        "kind": "ReplayMismatch",
                        "message": f"recorded call {seq} was {rec.method!r}, runtime asked for {name!r}",
                    },
                }
            else:
                response = {
                    "ok": False,
                    "error": {"kind": "ReplayMismatch", "message": f"no recorded reply for call {seq}"},
                }
            return HelperCallRecord(
                invocation_id=tags["invocation_id"],
                sequence_no=seq,
                method=name,
                request=args,
                response=response,
                latency_ms=0,
            )
        t0 = time.monotonic()
        if seq > self.helper_call_limit:
            response: dict[str, Any] = {
                "ok": False,
                "error": {
                    "kind": "HelperBudgetExceeded",
                    "message": f"invocation exceeded {self.helper_call_limit} helper calls",
                },
            }
            meters = Meters()
        else:
            response, meters = server.serve(name, args)
        return HelperCallRecord(
            invocation_id=tags["invocation_id"],
            sequence_no=seq,
            method=name,
            request=args,
            response=response,
            latency_ms=int((time.monotonic() - t0) * 1000),
            tokens_in=meters.tokens_in,
            tokens_out=meters.tokens_out,
            llm_requests=meters.llm_requests,
        )

    def _send(self, proc: subprocess.Popen, obj: dict[str, Any]) -> bool:
        data = json.dumps(obj, ensure_ascii=False)
        if len(data.encode("utf-8")) > MAX_FRAME_BYTES:
            obj = {"id": obj.get("id"), "ok": False, "error": {"kind": "FrameTooLarge", "message": "reply exceeds 4 MiB"}}
            data = json.dumps(obj, ensure_ascii=False)
        try:
            proc.stdin.write(data + "\n")
            proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError, ValueError):
            return False

    def _reap(self, proc: subprocess.Popen, graceful: bool = True) -> None:
        try:
            proc.stdin.close()
        except (OSError, ValueError):
            pass
        if graceful:
            try:
                proc.wait(timeout=2.0)
                return
            except subprocess.TimeoutExpired:
                pass
        proc.kill()
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            pass

    def _finish(
        self,
        answer: dict[str, Any] | None,
        error: ErrorInfo | None,
        records: list[HelperCallRecord],
        started: float,
        tags: dict[str, Any],
        replay: ReplaySource | None,
    ) -> WorkflowResult:
        wall_ms = replay.wall_ms if replay is not None else int((time.monotonic() - started) * 1000)
        result = WorkflowResult(
            answer=answer, error=error, helper_calls=tuple(records), wall_ms=wall_ms
        )
        if self.log:
            self.log(
                {
                    "event": "invocation_end",
                    **tags,
                    "outcome": "answer" if result.ok else "error",
                    "error_kind": None if result.ok else error.kind,
                    "wall_ms": wall_ms,
                    "helper_count": len(records),
                }
            )
        return result
