"""Workflow runtime: one process, one workflow invocation.

The host process speaks newline-delimited JSON over this process's stdio.
Workflow code gets a single `agent` object whose methods proxy helper calls
back to the host; everything else the code needs it must import itself.
"""

from .channel import Channel, ChannelClosed, FrameTooLarge
from .proxy import Agent, HelperError
from .runner import run_workflow

__all__ = [
    "Agent",
    "Channel",
    "ChannelClosed",
    "FrameTooLarge",
    "HelperError",
    "run_workflow",
]
