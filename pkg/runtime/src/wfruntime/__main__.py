"""Process entry point: read one job, run it, emit exactly one done frame."""

from __future__ import annotations

import argparse
import os
import random
import sys

from .channel import Channel, ChannelClosed, FrameTooLarge
from .proxy import Agent
from .runner import format_error, run_workflow


def main() -> int:
    parser = argparse.ArgumentParser(prog="wfruntime")
    parser.add_argument("--scratch", default=None, help="working directory for the invocation")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed derived from the invocation id")
    args = parser.parse_args()

    channel = Channel()
    if args.scratch:
        try:
            os.chdir(args.scratch)
        except OSError as exc:
            channel.write_frame(
                {
                    "id": "d0",
                    "method": "done",
                    "params": {"error": {"kind": "ScratchUnavailable", "message": str(exc), "trace": ""}},
                }
            )
            return 1
    random.seed(args.seed)

    try:
        job = channel.read_frame()
    except ChannelClosed as exc:
        channel.log(f"channel closed before a job arrived: {exc}")
        return 3

    params = job.get("params") or {}
    done: dict = {"id": "d0", "method": "done", "params": {}}
    if job.get("method") != "run_workflow":
        done["params"]["error"] = {
            "kind": "ProtocolError",
            "message": f"expected run_workflow, got {job.get('method')!r}",
            "trace": "",
        }
    else:
        agent = Agent(channel)
        try:
            result = run_workflow(
                str(params.get("source", "")),
                str(params.get("task", "")),
                agent,
                params.get("entry_point"),
            )
            done["params"]["result"] = result
        except ChannelClosed as exc:
            channel.log(f"channel closed mid-workflow: {exc}")
            return 3
        except BaseException as exc:  # every failure becomes an error frame
            done["params"]["error"] = format_error(exc)

    try:
        channel.write_frame(done)
    except FrameTooLarge:
        done["params"] = {
            "error": {
                "kind": "FrameTooLarge",
                "message": "workflow result exceeds the 4 MiB frame cap",
                "trace": "",
            }
        }
        try:
            channel.write_frame(done)
        except (FrameTooLarge, ChannelClosed):
            return 3
    except ChannelClosed as exc:
        channel.log(f"channel closed while sending the done frame: {exc}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
