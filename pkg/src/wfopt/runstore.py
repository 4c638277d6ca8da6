"""On-disk layout for a run directory and the helpers that write it.

Layout under <run_dir>/:
    config.json                         resolved config + task + mode + hash
    iterations/<i>/state.json           pre-iteration state snapshot
    iterations/<i>/candidate_<k>/       action.txt, workflow.src, feedback.json
    trajectories.jsonl                  assembled training trajectories
    helper_log.jsonl                    append-only event stream (meta + sandbox)
    best_workflow.src                   best program found
    report.json                         final structured summary

Everything except helper_log.jsonl is written whole; the log is append-only
and is the single source of truth for API-call and token totals.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from typing import Any, Iterator

from .errors import IncompleteRun, IoFailure
from .model import RunConfig, TaskSpec


def dump_json(path: str, payload: Any) -> None:
    """Write pretty, key-sorted JSON (stable across runs)."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise IncompleteRun(f"missing run artifact: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def compact_line(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(task: TaskSpec, config: RunConfig, mode: str) -> str:
    """Stable digest of everything that determines a run's behaviour."""
    body = compact_line({"task": task.to_dict(), "config": config.to_dict(), "mode": mode})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


class RunStore:
    """All filesystem reads/writes for one run directory."""

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        self._log_lock = threading.Lock()
        self._log_handle = None

    # -- paths ---------------------------------------------------------

    def path(self, *parts: str) -> str:
        return os.path.join(self.run_dir, *parts)

    def iteration_dir(self, iteration: int) -> str:
        return self.path("iterations", str(iteration))

    def candidate_dir(self, iteration: int, candidate: int) -> str:
        return os.path.join(self.iteration_dir(iteration), f"candidate_{candidate}")

    # -- writers -------------------------------------------------------

    def prepare(self) -> None:
        try:
            os.makedirs(self.path("iterations"), exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create run dir {self.run_dir}: {exc}") from exc

    def write_config(self, task: TaskSpec, config: RunConfig, mode: str) -> str:
        digest = config_hash(task, config, mode)
        dump_json(
            self.path("config.json"),
            {
                "task": task.to_dict(),
                "config": config.to_dict(),
                "mode": mode,
                "config_hash": digest,
            },
        )
        return digest

    def write_state(self, iteration: int, payload: dict[str, Any]) -> None:
        os.makedirs(self.iteration_dir(iteration), exist_ok=True)
        dump_json(os.path.join(self.iteration_dir(iteration), "state.json"), payload)

    def write_seed(self, payload: dict[str, Any]) -> None:
        dump_json(self.path("seed.json"), payload)

    def read_seed(self) -> dict[str, Any] | None:
        path = self.path("seed.json")
        if not os.path.exists(path):
            return None
        return load_json(path)

    def write_candidate(
        self,
        iteration: int,
        candidate: int,
        *,
        raw_text: str,
        source: str | None,
        feedback: dict[str, Any],
    ) -> None:
        cdir = self.candidate_dir(iteration, candidate)
        try:
            os.makedirs(cdir, exist_ok=True)
            with open(os.path.join(cdir, "action.txt"), "w", encoding="utf-8") as fh:
                fh.write(raw_text)
            if source is not None:
                with open(os.path.join(cdir, "workflow.src"), "w", encoding="utf-8") as fh:
                    fh.write(source)
        except OSError as exc:
            raise IoFailure(f"cannot write candidate files in {cdir}: {exc}") from exc
        dump_json(os.path.join(cdir, "feedback.json"), feedback)

    def append_helper_event(self, event: dict[str, Any]) -> None:
        """Append one event line; safe to call from sandbox worker threads."""
        with self._log_lock:
            if self._log_handle is None:
                try:
                    self._log_handle = open(
                        self.path("helper_log.jsonl"), "a", encoding="utf-8"
                    )
                except OSError as exc:
                    raise IoFailure(f"cannot open helper log: {exc}") from exc
            self._log_handle.write(compact_line(event) + "\n")
            self._log_handle.flush()

    def close(self) -> None:
        with self._log_lock:
            if self._log_handle is not None:
                self._log_handle.close()
                self._log_handle = None

    def write_trajectories(self, rows: list[dict[str, Any]]) -> None:
        try:
            with open(self.path("trajectories.jsonl"), "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(compact_line(row) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write trajectories: {exc}") from exc

    def write_best_workflow(self, source: str) -> None:
        try:
            with open(self.path("best_workflow.src"), "w", encoding="utf-8") as fh:
                fh.write(source)
        except OSError as exc:
            raise IoFailure(f"cannot write best workflow: {exc}") from exc

    def write_report(self, report: dict[str, Any]) -> None:
        dump_json(self.path("report.json"), report)

    # -- readers -------------------------------------------------------

    def read_config(self) -> dict[str, Any]:
        return load_json(self.path("config.json"))

    def read_state(self, iteration: int) -> dict[str, Any]:
        return load_json(os.path.join(self.iteration_dir(iteration), "state.json"))

    def read_report(self) -> dict[str, Any]:
        return load_json(self.path("report.json"))

    def read_candidate(self, iteration: int, candidate: int) -> dict[str, Any]:
        cdir = self.candidate_dir(iteration, candidate)
        out: dict[str, Any] = {"feedback": load_json(os.path.join(cdir, "feedback.json"))}
        try:
            with open(os.path.join(cdir, "action.txt"), encoding="utf-8") as fh:
                out["raw_text"] = fh.read()
        except FileNotFoundError as exc:
            raise IncompleteRun(f"missing action.txt for {cdir}") from exc
        except OSError as exc:
            raise IoFailure(f"cannot read {cdir}: {exc}") from exc
        src = os.path.join(cdir, "workflow.src")
        if os.path.exists(src):
            with open(src, encoding="utf-8") as fh:
                out["source"] = fh.read()
        return out

    def list_iterations(self) -> list[int]:
        root = self.path("iterations")
        if not os.path.isdir(root):
            raise IncompleteRun(f"run dir {self.run_dir} has no iterations/")
        return sorted(int(name) for name in os.listdir(root) if name.isdigit())

    def list_candidates(self, iteration: int) -> list[int]:
        idir = self.iteration_dir(iteration)
        out = []
        for name in os.listdir(idir):
            if name.startswith("candidate_"):
                out.append(int(name.removeprefix("candidate_")))
        return sorted(out)

    def read_best_workflow(self) -> str:
        try:
            with open(self.path("best_workflow.src"), encoding="utf-8") as fh:
                return fh.read()
        except FileNotFoundError as exc:
            raise IncompleteRun("run has no best_workflow.src") from exc
        except OSError as exc:
            raise IoFailure(f"cannot read best workflow: {exc}") from exc

    def iter_helper_events(self) -> Iterator[dict[str, Any]]:
        path = self.path("helper_log.jsonl")
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        yield json.loads(line)
        except FileNotFoundError as exc:
            raise IncompleteRun(f"missing helper log: {path}") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"cannot read helper log: {exc}") from exc

    def read_trajectories(self) -> list[dict[str, Any]]:
        path = self.path("trajectories.jsonl")
        try:
            with open(path, encoding="utf-8") as fh:
                return [json.loads(line) for line in fh if line.strip()]
        except FileNotFoundError as exc:
            raise IncompleteRun(f"missing trajectories: {path}") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"cannot read trajectories: {exc}") from exc

    # -- aggregates ----------------------------------------------------

    def sum_log_totals(self) -> dict[str, int]:
        """Usage totals recomputed from the event log, never from memory."""
        totals = {
            "meta_requests": 0,
            "meta_tokens_in": 0,
            "meta_tokens_out": 0,
            "executor_requests": 0,
            "executor_tokens_in": 0,
            "executor_tokens_out": 0,
            "helper_calls": 0,
        }
        for event in self.iter_helper_events():
            kind = event.get("event")
            if kind == "meta":
                totals["meta_requests"] += int(event.get("calls", 0))
                totals["meta_tokens_in"] += int(event.get("tokens_in", 0))
                totals["meta_tokens_out"] += int(event.get("tokens_out", 0))
            elif kind == "helper":
                totals["helper_calls"] += 1
                totals["executor_requests"] += int(event.get("llm_requests", 0))
                totals["executor_tokens_in"] += int(event.get("tokens_in", 0))
                totals["executor_tokens_out"] += int(event.get("tokens_out", 0))
        return totals
