"""Sandboxed workflow execution: host supervisor, helper APIs, nested runner."""

from .correction import MAX_CORRECTIONS, SKIP, Skip, format_error_report, probe_and_correct
from .helpers import HELPER_NAMES, HelperServer, extract_answer_str, extract_code_block
from .host import (
    MAX_FRAME_BYTES,
    ErrorInfo,
    HelperCallRecord,
    ReplaySource,
    SandboxHost,
    WorkflowResult,
    invocation_seed,
)
from .nested import NestedResult, run_nested
from .policy import DENIED_MODULES, scan_denied_imports

__all__ = [
    "MAX_CORRECTIONS",
    "SKIP",
    "Skip",
    "format_error_report",
    "probe_and_correct",
    "HELPER_NAMES",
    "HelperServer",
    "extract_answer_str",
    "extract_code_block",
    "MAX_FRAME_BYTES",
    "ErrorInfo",
    "HelperCallRecord",
    "ReplaySource",
    "SandboxHost",
    "WorkflowResult",
    "invocation_seed",
    "NestedResult",
    "run_nested",
    "DENIED_MODULES",
    "scan_denied_imports",
]
