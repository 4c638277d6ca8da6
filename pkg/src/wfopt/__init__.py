"""Workflow optimization engine.

A small meta-agent model iteratively writes executable workflow programs that
orchestrate a larger executor model through a fixed helper API. Programs run
in an isolated subprocess runtime, get scored on a private validation split,
and feed a best-of-m selection loop whose trajectories can be exported as a
reward-weighted regression dataset.
"""

from .backends import (
    BackendSpec,
    CompletionBatch,
    RuleBackend,
    ScenarioBackend,
    build_backend,
    estimate_tokens,
)
from .collector import (
    CandidateRecord,
    IterationRecord,
    assemble_trajectories,
    collect_iteration,
    compute_reward,
    export_dataset,
    rwr_weight,
    select_best,
)
from .engine import (
    RunArtifacts,
    init_state,
    load_splits,
    reset_window,
    run_optimization,
    transition,
)
from .errors import WorkflowOptError, error_kind
from .evaluation import (
    EvalReport,
    SandboxEvaluator,
    evaluate_on_test,
    evaluate_workflow,
    score_sample,
    split_validation,
)
from .gateway import (
    Message,
    MetaGateway,
    Role,
    load_templates,
    parse_action,
    render_correction_prompt,
    render_state_prompt,
)
from .metrics import accuracy_score, normalize_answer, token_f1
from .model import (
    NO_SCORE,
    AgentAction,
    CaseStudy,
    ExecStats,
    Feedback,
    Metric,
    OptimizationState,
    ProgramOrigin,
    Provenance,
    RunConfig,
    Sample,
    SampleSplit,
    TaskFamily,
    TaskSpec,
    Trajectory,
    TrajectoryStep,
    WorkflowProgram,
    load_dataset,
    save_dataset,
    validate_answer_dict,
    validate_workflow_program,
)
from .replay import replay_run
from .report import build_report, rebuild_report, write_curve_csv
from .runstore import RunStore, config_hash
from .rwr import ToyPolicy, load_rlao_dataset, make_batch, rwr_grad, rwr_loss, train_toy
from .sandbox import (
    SKIP,
    ErrorInfo,
    HelperServer,
    SandboxHost,
    WorkflowResult,
    probe_and_correct,
    run_nested,
)

__version__ = "0.1.0"

__all__ = [
    "AgentAction",
    "BackendSpec",
    "CandidateRecord",
    "CaseStudy",
    "CompletionBatch",
    "ErrorInfo",
    "EvalReport",
    "ExecStats",
    "Feedback",
    "HelperServer",
    "IterationRecord",
    "Message",
    "MetaGateway",
    "Metric",
    "NO_SCORE",
    "OptimizationState",
    "ProgramOrigin",
    "Provenance",
    "Role",
    "RuleBackend",
    "RunArtifacts",
    "RunConfig",
    "RunStore",
    "SKIP",
    "Sample",
    "SampleSplit",
    "SandboxEvaluator",
    "SandboxHost",
    "ScenarioBackend",
    "TaskFamily",
    "TaskSpec",
    "ToyPolicy",
    "Trajectory",
    "TrajectoryStep",
    "WorkflowOptError",
    "WorkflowProgram",
    "WorkflowResult",
    "accuracy_score",
    "assemble_trajectories",
    "build_backend",
    "build_report",
    "collect_iteration",
    "compute_reward",
    "config_hash",
    "error_kind",
    "estimate_tokens",
    "evaluate_on_test",
    "evaluate_workflow",
    "export_dataset",
    "init_state",
    "load_dataset",
    "load_rlao_dataset",
    "load_splits",
    "load_templates",
    "make_batch",
    "normalize_answer",
    "parse_action",
    "probe_and_correct",
    "rebuild_report",
    "render_correction_prompt",
    "render_state_prompt",
    "replay_run",
    "reset_window",
    "run_nested",
    "run_optimization",
    "rwr_grad",
    "rwr_loss",
    "rwr_weight",
    "save_dataset",
    "score_sample",
    "select_best",
    "split_validation",
    "token_f1",
    "train_toy",
    "transition",
    "validate_answer_dict",
    "validate_workflow_program",
    "write_curve_csv",
]
