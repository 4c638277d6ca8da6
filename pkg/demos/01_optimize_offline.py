#!/usr/bin/env python3
# A complete offline optimization run. A scripted "meta" model proposes
# workflow programs, the engine executes each one in a subprocess sandbox,
# scores it on the private half of a tiny arithmetic dataset, and keeps the
# best. No network, no credentials: both models are deterministic mocks.
import json
import tempfile
from pathlib import Path

from wfopt import (
    BackendSpec,
    Metric,
    RunConfig,
    Sample,
    SampleSplit,
    TaskFamily,
    TaskSpec,
    run_optimization,
    save_dataset,
)

root = Path(tempfile.mkdtemp(prefix="wfopt-demo-"))

# the task: answer "Qn: a+b?" questions with the sum as a string
samples = [
    Sample(input="Q1: 2+2?", gold="4", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q2: 3+3?", gold="6", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q3: 5+5?", gold="10", split=SampleSplit.PUBLIC_VAL),
    Sample(input="Q4: 7+7?", gold="14", split=SampleSplit.PUBLIC_VAL),
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

# the scripted meta-agent: first a lazy constant guess, then an actual parser
GUESS = 'def workflow(agent, task):\n    return {"answer": "4"}\n'
PARSER = (
    "def workflow(agent, task):\n"
    "    a, b = task.split(':')[1].split('?')[0].split('+')\n"
    "    return {'answer': str(int(a) + int(b))}\n"
)
steps = {
    "steps": [
        {"responses": [f"A fixed guess to get started.\n```python\n{GUESS}```\n"]},
        {"responses": [f"Parse the numbers instead of guessing.\n```python\n{PARSER}```\n"]},
    ]
}
(root / "meta.json").write_text(json.dumps(steps), encoding="utf-8")
(root / "executor.json").write_text(json.dumps({"rules": []}), encoding="utf-8")

config = RunConfig(
    meta_backend=BackendSpec.mock(str(root / "meta.json")),
    executor_backend=BackendSpec.mock(str(root / "executor.json")),
    iterations=2,
)

artifacts = run_optimization(config, task, "infer", str(root / "run"))

# the guess scores 0.5 on the private half (one of two answers is 4), the
# parser scores 1.0, so the best-so-far curve climbs
print("best-so-far curve:", list(artifacts.global_best_curve))
print("best score:", artifacts.best_score)
print("best workflow:")
print(artifacts.best_program.source)
print("meta requests:", artifacts.report["totals"]["meta_requests"])
print("run artifacts in:", root / "run")
