#!/usr/bin/env python3
# The execution sandbox up close: workflows run in a throwaway subprocess and
# reach the executor model only through served helper calls. This script runs
# a helper-using workflow, a crashing one, and a runaway loop, then replays
# the first invocation from its recorded helper traffic with no backend at all.
import time

from wfopt import RuleBackend, Sample, SampleSplit, SandboxHost, validate_workflow_program
from wfopt.sandbox.host import ReplaySource

# the "strong model": a stateless substring-rule mock
executor = RuleBackend(
    {
        "rules": [
            {
                "contains": "capital of France",
                "response": "Paris is the capital. The answer is Paris.",
            }
        ]
    }
)
host = SandboxHost(executor, workflow_timeout_ms=10_000)
sample = Sample(
    input="What is the capital of France?", gold="Paris", split=SampleSplit.PRIVATE_VAL
)

ASKER = (
    "def workflow(agent, task):\n"
    "    replies = agent.call_llm(\n"
    "        messages=[{'role': 'user', 'content': task}],\n"
    "        agent_role='Geographer',\n"
    "    )\n"
    "    return {'answer': agent.extract_answer_str(replies[0])}\n"
)

result = host.execute_workflow(
    validate_workflow_program(ASKER), sample, invocation_id="demo.ask"
)
print("answer:", result.answer["answer"])
for call in result.helper_calls:
    print(f"  helper #{call.sequence_no} {call.method}: {call.llm_requests} llm request(s)")

# exceptions inside the workflow come back as structured errors, not crashes
CRASHER = "def workflow(agent, task):\n    return {'answer': {}['missing']}\n"
result = host.execute_workflow(
    validate_workflow_program(CRASHER), sample, invocation_id="demo.crash"
)
print("crash ->", result.error.kind, "|", result.error.message)

# a busy loop is killed at its deadline; the host never hangs with it
LOOPER = "def workflow(agent, task):\n    while True:\n        pass\n"
started = time.monotonic()
result = host.execute_workflow(
    validate_workflow_program(LOOPER), sample, invocation_id="demo.loop", timeout_ms=500
)
print(f"runaway loop -> {result.error.kind} after {time.monotonic() - started:.2f}s")

# replay: recorded helper replies stand in for the executor, so the same
# invocation reproduces the same answer with backends disabled
recorded = host.execute_workflow(
    validate_workflow_program(ASKER), sample, invocation_id="demo.record"
)
replay_host = SandboxHost(executor=None)
replayed = replay_host.execute_workflow(
    validate_workflow_program(ASKER),
    sample,
    invocation_id="demo.record",
    replay=ReplaySource(records=tuple(recorded.helper_calls), wall_ms=recorded.wall_ms),
)
print("replayed answer matches:", replayed.answer == recorded.answer)
