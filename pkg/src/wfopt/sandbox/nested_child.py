"""Child script for the nested code sandbox.

Runs standalone under ``python -I -S`` (no site-packages, stdlib only), so it
must not import anything from this package. Reads one JSON job from stdin and
writes one JSON verdict to stdout:

  {"code": str, "mode": "solution"|"tests", "tests": [str, ...],
   "entry_point": str, "deny": [module root, ...]}

The job's `deny` list is enforced with an import-machinery hook, so spellings
the static scan cannot see (importlib indirection, __import__) are still
blocked at run time.
"""

import io
import json
import sys
import traceback

_MAX_TRACE_FRAMES = 10


def _install_import_guard(denied):
    denied = set(denied)
    real_import = __builtins__.__import__ if hasattr(__builtins__, "__import__") else __builtins__["__import__"]

    def guarded(name, *args, **kwargs):
        if name.split(".")[0] in denied:
            raise ImportError(f"import of {name!r} is not allowed in the sandbox")
        return real_import(name, *args, **kwargs)

    if hasattr(__builtins__, "__import__"):
        __builtins__.__import__ = guarded
    else:
        __builtins__["__import__"] = guarded


def _error(kind, message, tb=None):
    out = {"ok": False, "kind": kind, "message": message}
    if tb is not None:
        frames = traceback.format_tb(tb)[-_MAX_TRACE_FRAMES:]
        out["trace"] = "".join(frames)
    return out


def _run(job):
    code = job.get("code", "")
    mode = job.get("mode", "solution")
    namespace = {"__name__": "__sandbox__", "__builtins__": __builtins__}
    try:
        exec(compile(code, "<code>", "exec"), namespace)
    except BaseException as exc:
        return _error(type(exc).__name__, str(exc), exc.__traceback__)

    if mode == "solution":
        fn = namespace.get("solution")
        if not callable(fn):
            return _error("MissingSolutionFunction", "the code defines no callable `solution` function")
        try:
            value = fn()
        except BaseException as exc:
            return _error(type(exc).__name__, str(exc), exc.__traceback__)
        try:
            json.dumps(value)
        except (TypeError, ValueError):
            return {"ok": True, "value": repr(value), "coerced": True}
        return {"ok": True, "value": value}

    if mode == "tests":
        entry = job.get("entry_point", "solution")
        if entry and entry not in namespace:
            return _error("MissingEntryFunction", f"the code defines no `{entry}`")
        for i, test in enumerate(job.get("tests", [])):
            try:
                exec(compile(test, f"<test {i}>", "exec"), namespace)
            except AssertionError as exc:
                return _error("TestFailure", f"test {i} failed: {test!r}" + (f" ({exc})" if str(exc) else ""))
            except BaseException as exc:
                return _error(
                    "TestFailure", f"test {i} raised {type(exc).__name__}: {exc} in {test!r}", exc.__traceback__
                )
        return {"ok": True, "value": True}

    return _error("BadJob", f"unknown mode {mode!r}")


def main():
    raw = sys.stdin.read()
    out = sys.stdout
    # Anything the user code prints must not pollute the verdict stream.
    sys.stdout = io.StringIO()
    sys.stderr = io.StringIO()
    sys.stdin = io.StringIO()
    try:
        job = json.loads(raw)
    except ValueError as exc:
        verdict = _error("BadJob", f"undecodable job: {exc}")
    else:
        _install_import_guard(job.get("deny", []))
        try:
            verdict = _run(job)
        except BaseException as exc:  # belt and braces: always emit a verdict
            verdict = _error(type(exc).__name__, str(exc), exc.__traceback__)
    out.write(json.dumps(verdict, ensure_ascii=False))
    out.flush()


if __name__ == "__main__":
    main()
