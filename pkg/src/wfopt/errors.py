"""Exception taxonomy shared across the package.

Every error a caller may want to branch on gets its own class; the names
double as machine-readable kinds in IPC frames and logs (``error_kind()``).
"""

from __future__ import annotations


class WorkflowOptError(Exception):
    """Base class for all package errors."""


def error_kind(exc: BaseException) -> str:
    """Stable machine-readable kind string for an exception."""
    return type(exc).__name__


# --- domain-model validation ------------------------------------------------


class ValidationError(WorkflowOptError):
    """A domain value violates one of its declared invariants."""


class EmptySource(ValidationError):
    pass


class MissingEntryFunction(ValidationError):
    pass


class ContractError(WorkflowOptError):
    """A workflow result violates the answer-dict contract."""


class MissingAnswerKey(ContractError):
    pass


class NonCoercibleValue(ContractError):
    pass


# --- optimization loop --------------------------------------------------------


class WindowFull(WorkflowOptError):
    """Appending to a state whose history already reached the horizon."""


class FailedFeedback(WorkflowOptError):
    """Attempt to store failed feedback in an optimization state."""


class NoViableCandidate(WorkflowOptError):
    """No unskipped, unfiltered candidate is available for selection."""


class SeedlessAllFailed(WorkflowOptError):
    """Every iteration skipped and no seed workflow exists to fall back on."""


class SeedWorkflowInvalid(WorkflowOptError):
    """The configured seed workflow failed its probe execution."""


# --- gateway / backends -------------------------------------------------------


class TemplateMissingPlaceholder(WorkflowOptError):
    pass


class NoCodeBlock(WorkflowOptError):
    """Response text contains no fenced code block."""


class NoMatchingBlock(WorkflowOptError):
    """No fenced block defines the requested entry function."""


class BackendUnavailable(WorkflowOptError):
    """Chat backend unreachable after exhausting the retry budget."""


class ScenarioExhausted(WorkflowOptError):
    """Mock scenario has fewer scripted responses than requested."""


# --- evaluation ----------------------------------------------------------------


class TooFewSamples(WorkflowOptError):
    pass


class NotACodeTask(WorkflowOptError):
    pass


# --- collector / trainer --------------------------------------------------------


class NonpositiveTau(WorkflowOptError):
    pass


class NothingToExport(WorkflowOptError):
    """Export invoked on an empty trajectory list; no file is written."""


class IoFailure(WorkflowOptError):
    pass


class DivergedLoss(WorkflowOptError):
    """Training loss became non-finite."""


# --- runs ------------------------------------------------------------------------


class DatasetMissing(WorkflowOptError):
    pass


class IncompleteRun(WorkflowOptError):
    """Run directory lacks the files a report needs."""


class ConfigError(WorkflowOptError):
    """CLI/run configuration is invalid or references missing paths."""
