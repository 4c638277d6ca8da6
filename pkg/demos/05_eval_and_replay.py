#!/usr/bin/env python3
# After optimizing: score the frozen best workflow on the held-out test split,
# then prove the whole run is reproducible by replaying it from its own logs.
# Replay re-executes every recorded invocation with backends disabled and must
# rebuild report.json byte for byte.
import json
import tempfile
from pathlib import Path

from wfopt import (
    BackendSpec,
    Metric,
    RunConfig,
    RunStore,
    Sample,
    SampleSplit,
    SandboxHost,
    TaskFamily,
    TaskSpec,
    build_backend,
    evaluate_on_test,
    replay_run,
    run_optimization,
    save_dataset,
    validate_workflow_program,
)

root = Path(tempfile.mkdtemp(prefix="wfopt-demo-"))

samples = [
    Sample(input="Q1: 2+2?", gold="4", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q2: 3+3?", gold="6", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q3: 5+5?", gold="10", split=SampleSplit.PUBLIC_VAL),
    Sample(input="Q4: 7+7?", gold="14", split=SampleSplit.PUBLIC_VAL),
    Sample(input="T1: 4+4?", gold="8", split=SampleSplit.TEST),
    Sample(input="T2: 6+6?", gold="12", split=SampleSplit.TEST),
]
save_dataset(samples, str(root / "dataset.jsonl"))
task = TaskSpec(
    id="demo-arith",
    family=TaskFamily.QA,
    description_text="Answer short arithmetic questions.",
    metric=Metric.ACCURACY,
    answer_schema="the number as a string",
    dataset_ref=str(root / "dataset.jsonl"),
)

PARSER = (
    "def workflow(agent, task):\n"
    "    a, b = task.split(':')[1].split('?')[0].split('+')\n"
    "    return {'answer': str(int(a) + int(b))}\n"
)
steps = {"steps": [{"responses": [f"Parse it.\n```python\n{PARSER}```\n"]}]}
(root / "meta.json").write_text(json.dumps(steps), encoding="utf-8")
(root / "executor.json").write_text(json.dumps({"rules": []}), encoding="utf-8")

config = RunConfig(
    meta_backend=BackendSpec.mock(str(root / "meta.json")),
    executor_backend=BackendSpec.mock(str(root / "executor.json")),
    iterations=1,
)
run_dir = str(root / "run")
artifacts = run_optimization(config, task, "infer", run_dir)
print("validation score of the kept workflow:", artifacts.best_score)

# test-split evaluation: a fresh host with log=None so test traffic never
# lands in the run's helper log (the log is the replay record)
store = RunStore(run_dir)
host = SandboxHost(build_backend(config.executor_backend), log=None)
best = validate_workflow_program(store.read_best_workflow())
test_samples = [s for s in samples if s.split is SampleSplit.TEST]


def execute(sample, phase, index):
    return host.execute_workflow(
        best,
        sample,
        invocation_id=f"test.s{index:04d}",
        entry_point=task.entry_point,
        phase=phase,
    )


result = evaluate_on_test(task, test_samples, execute)
print(f"test aggregate: {result.aggregate} over {len(result.per_sample)} samples")

# replay the entire run from helper_log.jsonl, no backends
report_before = (Path(run_dir) / "report.json").read_bytes()
replay_run(run_dir)
report_replayed = (Path(run_dir) / "replay" / "report.json").read_bytes()
print("replayed report is byte-identical:", report_replayed == report_before)
