"""Framed JSON over the process's real stdio.

The channel grabs the real stdin/stdout at construction and swaps StringIO
stand-ins into sys.*, so print() calls inside untrusted workflow code can
never corrupt the frame stream. Frames are single lines of UTF-8 JSON capped
at 4 MiB.
"""

from __future__ import annotations

import io
import json
import sys
from typing import Any

MAX_FRAME_BYTES = 4 * 1024 * 1024


class ChannelClosed(Exception):
    """The peer went away; nothing can be sent or received any more."""


class FrameTooLarge(Exception):
    """A frame exceeded the 4 MiB protocol cap."""


class Channel:
    def __init__(self) -> None:
        self._stdin = sys.stdin
        self._stdout = sys.stdout
        self._stderr = sys.stderr
        # Untrusted code sees throwaway streams from here on.
        sys.stdin = io.StringIO()
        sys.stdout = io.StringIO()
        sys.stderr = io.StringIO()

    def read_frame(self) -> dict[str, Any]:
        try:
            line = self._stdin.readline()
        except (OSError, ValueError) as exc:
            raise ChannelClosed(str(exc)) from exc
        if line == "":
            raise ChannelClosed("stdin reached EOF")
        if len(line.encode("utf-8", "replace")) > MAX_FRAME_BYTES:
            raise FrameTooLarge("incoming frame exceeds 4 MiB")
        try:
            frame = json.loads(line)
        except ValueError as exc:
            raise ChannelClosed(f"undecodable frame: {exc}") from exc
        if not isinstance(frame, dict):
            raise ChannelClosed("frame is not a JSON object")
        return frame

    def write_frame(self, frame: dict[str, Any]) -> None:
        data = json.dumps(frame, ensure_ascii=False, separators=(",", ":"))
        if len(data.encode("utf-8")) > MAX_FRAME_BYTES:
            raise FrameTooLarge("outgoing frame exceeds 4 MiB")
        try:
            self._stdout.write(data + "\n")
            self._stdout.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise ChannelClosed(str(exc)) from exc

    def log(self, message: str) -> None:
        """Internal diagnostics onto the real stderr (the host drains it)."""
        try:
            self._stderr.write(message + "\n")
            self._stderr.flush()
        except (OSError, ValueError):
            pass
