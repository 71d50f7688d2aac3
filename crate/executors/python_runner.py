#!/usr/bin/env python3
"""Executor for the Code tool.

Reads {"snippet": str, "tests": [str]} from stdin, runs the snippet, then each
test assertion in the snippet's namespace. Prints {"passed": [bool], "stderr": str}.
"""
import json
import sys
import traceback


def main():
    req = json.load(sys.stdin)
    snippet = req.get("snippet", "")
    tests = req.get("tests", [])
    diagnostics = []
    namespace = {"__name__": "__main__"}
    try:
        code = compile(snippet, "<snippet>", "exec")
        exec(code, namespace)
    except BaseException as exc:  # noqa: BLE001 - report everything
        line = traceback.format_exception_only(type(exc), exc)[-1].strip()
        json.dump({"passed": [False] * len(tests), "stderr": line}, sys.stdout)
        return
    passed = []
    for test in tests:
        try:
            exec(compile(test, "<test>", "exec"), namespace)
            passed.append(True)
        except BaseException as exc:  # noqa: BLE001
            passed.append(False)
            detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
            diagnostics.append(detail)
    json.dump({"passed": passed, "stderr": "; ".join(diagnostics)}, sys.stdout)


if __name__ == "__main__":
    main()
