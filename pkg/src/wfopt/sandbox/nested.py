"""Host side of the nested code sandbox.

Each call spawns a fresh stdlib-only interpreter (`python -I -S`) running
``nested_child.py``, with a hard wall-clock timeout. Used by the
`execute_code` and `test_on_public_test` helpers and by pass@1 scoring.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .policy import DENIED_MODULES, scan_denied_imports

_CHILD = str(Path(__file__).with_name("nested_child.py"))


@dataclass(frozen=True)
class NestedResult:
    """Verdict of one nested execution."""

    ok: bool
    value: Any = None
    kind: str = ""  # error kind when not ok
    message: str = ""
    trace: str = ""


def run_nested(
    code: str,
    *,
    mode: str = "solution",
    tests: tuple[str, ...] = (),
    entry_point: str = "solution",
    timeout_s: float = 10.0,
) -> NestedResult:
    """Execute untrusted code in a throwaway interpreter and return a verdict.

    mode "solution" calls the code's `solution()` and returns its value;
    mode "tests" runs each test statement after the code and passes only if
    none raises.
    """
    denied = scan_denied_imports(code)
    if denied:
        return NestedResult(
            ok=False, kind="DeniedImport", message=f"code imports denied modules: {', '.join(denied)}"
        )
    job = {
        "code": code,
        "mode": mode,
        "tests": list(tests),
        "entry_point": entry_point,
        "deny": sorted(DENIED_MODULES),
    }
    try:
        proc = subprocess.run(
            [sys.executable, "-I", "-S", _CHILD],
            input=json.dumps(job),
            capture_output=True,
            text=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired:
        return NestedResult(ok=False, kind="NestedTimeout", message=f"execution exceeded {timeout_s:g}s")
    try:
        verdict = json.loads(proc.stdout)
    except ValueError:
        tail = (proc.stderr or "")[-500:]
        return NestedResult(ok=False, kind="SandboxCrash", message=f"no verdict (exit {proc.returncode}): {tail}")
    if verdict.get("ok"):
        return NestedResult(ok=True, value=verdict.get("value"))
    return NestedResult(
        ok=False,
        kind=verdict.get("kind", "UnknownError"),
        message=verdict.get("message", ""),
        trace=verdict.get("trace", ""),
    )
