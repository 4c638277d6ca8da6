#!/usr/bin/env python3
# Collection mode: sample m candidate workflows per iteration, keep the best,
# and turn the whole run into a reward-weighted training dataset. The piecewise
# reward pays 1.0 for beating the window's best score, 0.5 for merely beating
# the previous workflow, 0.0 otherwise; exported weights are exp(reward / tau).
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
    export_dataset,
    run_optimization,
)

root = Path(tempfile.mkdtemp(prefix="wfopt-demo-"))

samples = [
    Sample(input="Q1: 2+2?", gold="4", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q2: 3+3?", gold="6", split=SampleSplit.PRIVATE_VAL),
    Sample(input="Q3: 5+5?", gold="10", split=SampleSplit.PUBLIC_VAL),
    Sample(input="Q4: 7+7?", gold="14", split=SampleSplit.PUBLIC_VAL),
]
task = TaskSpec(
    id="demo-arith",
    family=TaskFamily.QA,
    description_text="Answer short arithmetic questions.",
    metric=Metric.ACCURACY,
    answer_schema="the number as a string",
)


def wf(answer):
    return f'def workflow(agent, task):\n    return {{"answer": "{answer}"}}\n'


def proposal(text, source):
    return f"{text}\n```python\n{source}```\n"


PARSER = (
    "def workflow(agent, task):\n"
    "    a, b = task.split(':')[1].split('?')[0].split('+')\n"
    "    return {'answer': str(int(a) + int(b))}\n"
)

# two candidates per iteration: the parser (1.0) wins turn 1; turn 2 offers
# only weak constants, so the better of the two is carried with reward 0.0
steps = {
    "steps": [
        {"responses": [proposal("Guess a constant.", wf("4")), proposal("Parse the task.", PARSER)]},
        {"responses": [proposal("Try 9.", wf("9")), proposal("Try 7.", wf("7"))]},
    ]
}
(root / "meta.json").write_text(json.dumps(steps), encoding="utf-8")
(root / "executor.json").write_text(json.dumps({"rules": []}), encoding="utf-8")

config = RunConfig(
    meta_backend=BackendSpec.mock(str(root / "meta.json")),
    executor_backend=BackendSpec.mock(str(root / "executor.json")),
    iterations=2,
    m=2,
)

artifacts = run_optimization(
    config, task, "collect", str(root / "run"), samples=samples
)

for rec in artifacts.iteration_log:
    scores = [c.feedback.score if c.feedback else None for c in rec.candidates]
    rewards = [c.reward for c in rec.candidates]
    print(f"window {rec.window} turn {rec.turn}: scores={scores} rewards={rewards} selected={rec.selected}")

# every viable unselected candidate becomes a one-turn trajectory; the two
# selected candidates join into the window's two-turn pair
header = export_dataset(
    list(artifacts.trajectories),
    config.tau,
    str(root / "rlao.jsonl"),
    task_id=task.id,
    config_hash=artifacts.report["config_hash"],
)
print("export counts:", header["counts"])

with open(root / "rlao.jsonl", encoding="utf-8") as fh:
    fh.readline()  # header
    for line in fh:
        record = json.loads(line)
        print(
            f"{record['trajectory_id']} turn {record['turn']}: "
            f"reward={record['reward']} weight={record['weight']:.4f}"
        )
