"""Import policy for untrusted code.

Process isolation keeps crashes contained; this denylist keeps generated code
away from the host OS on top of that. Violations are reported (and logged by
callers), never silently edited out of the source.
"""

from __future__ import annotations

import ast

# Module roots untrusted code may not import. Deliberately NOT on the list:
# math, random, collections, itertools, functools, re, json, string, statistics,
# datetime, decimal, fractions, heapq, bisect, typing -- generated workflows
# legitimately use those.
DENIED_MODULES = frozenset(
    {
        "os",
        "sys",
        "subprocess",
        "socket",
        "socketserver",
        "ssl",
        "shutil",
        "ctypes",
        "multiprocessing",
        "threading",
        "signal",
        "resource",
        "urllib",
        "http",
        "ftplib",
        "telnetlib",
        "smtplib",
        "poplib",
        "imaplib",
        "requests",
        "pty",
        "fcntl",
        "termios",
        "importlib",
        "pathlib",
        "tempfile",
        "webbrowser",
        "asyncio",
        "selectors",
        "pickle",
        "marshal",
        "code",
        "builtins",
    }
)


def scan_denied_imports(source: str) -> list[str]:
    """Names of denied module roots the source imports, sorted; [] if clean.

    Sources that do not parse return [] -- the runtime will surface the
    syntax error itself, which is more useful feedback than a policy report.
    """
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return []
    hits: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if root in DENIED_MODULES:
                    hits.add(root)
        elif isinstance(node, ast.ImportFrom):
            if node.module and node.level == 0:
                root = node.module.split(".")[0]
                if root in DENIED_MODULES:
                    hits.add(root)
        elif isinstance(node, ast.Call):
            # __import__("os") and importlib.import_module("os") textual forms
            fn = node.func
            name = fn.id if isinstance(fn, ast.Name) else getattr(fn, "attr", "")
            if name in ("__import__", "import_module") and node.args:
                arg = node.args[0]
                if isinstance(arg, ast.Constant) and isinstance(arg.value, str):
                    root = arg.value.split(".")[0]
                    if root in DENIED_MODULES:
                        hits.add(root)
    return sorted(hits)
