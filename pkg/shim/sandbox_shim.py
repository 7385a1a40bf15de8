"""In-sandbox candidate runner.

Executes one candidate Python program with the test input on stdin, forwards
the candidate's stdout untouched, and always emits exactly one structured
report as the final stderr line:

    __SHIM_REPORT__:{"ok": true}
    __SHIM_REPORT__:{"ok": false, "exception": "IndexError",
                     "message": "...", "line": 2, "truncated_guess": false}

Invocation:  python sandbox_shim.py CANDIDATE_PATH [--truncated]

The report line goes to a file descriptor duplicated from stderr before the
candidate runs, and every helper the reporting path needs is bound to a
local name up front, so no amount of monkeypatching, stream closing, or
stdlib vandalism inside the candidate can suppress the report. The process
always exits 0 via os._exit once the report is written; only an external
kill (timeout, signal) prevents that, which the host side reads as a crash.

Compile-time failures are distinguished from runtime exceptions:
unterminated triple-quoted strings are relabelled TripleQuotedError (the
interpreter folds them into SyntaxError), and indentation faults keep their
own class names. `line` is the deepest traceback frame located in the
candidate source, using candidate line numbering. `truncated_guess` is true
when --truncated was passed and a compile error points at (or past) the
last line: the signature of generation that hit its token cap mid-program.

This file is deliberately self-contained (stdlib only, no package imports)
so the executor can invoke it by path inside any scratch directory.
"""

from __future__ import annotations

import json
import os
import sys

SENTINEL = "__SHIM_REPORT__:"
MESSAGE_LIMIT = 1000

# Bound early: the reporting path must survive candidate sabotage.
_dumps = json.dumps
_write = os.write
_exit = os._exit
_report_fd = os.dup(2)

_TRIPLE_QUOTE_MARKERS = (
    "triple-quoted",
    "EOF in multi-line string",
)


def _flush_streams() -> None:
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.flush()
        except BaseException:
            pass


def _emit(report: dict) -> None:
    """Write the report as the final stderr line and terminate."""
    _flush_streams()
    try:
        payload = _dumps(report)
    except BaseException:
        payload = '{"ok": false, "exception": "Else", "message": "", "line": null}'
    try:
        _write(_report_fd, (SENTINEL + payload + "\n").encode("utf-8", "replace"))
    except BaseException:
        pass
    _exit(0)


def _emit_error(
    name: str,
    message: str,
    line: int | None,
    truncated_guess: bool = False,
) -> None:
    _emit({
        "ok": False,
        "exception": name,
        "message": message[:MESSAGE_LIMIT],
        "line": line,
        "truncated_guess": truncated_guess,
    })


def _deepest_candidate_line(exc: BaseException, path: str) -> int | None:
    """Line of the innermost traceback frame inside the candidate source.

    Exceptions raised in library code still get attributed to the nearest
    candidate call site, because the candidate's frames remain on the
    traceback; the module-level exec frame always matches, so a line is
    available whenever the candidate began executing.
    """
    line = None
    try:
        tb = exc.__traceback__
        while tb is not None:
            if tb.tb_frame.f_code.co_filename == path:
                line = tb.tb_lineno
            tb = tb.tb_next
    except BaseException:
        pass
    return line


def _classify_compile_error(exc: BaseException) -> str:
    name = type(exc).__name__
    message = str(exc)
    if any(marker in message for marker in _TRIPLE_QUOTE_MARKERS):
        return "TripleQuotedError"
    return name


def _run(path: str, truncated: bool) -> None:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        _emit_error("Else", f"cannot read candidate: {exc}", None)
        return
    text = raw.decode("utf-8", "replace")
    last_line = max(1, len(text.splitlines()))

    try:
        code = compile(text, path, "exec")
    except SyntaxError as exc:
        at_end = exc.lineno is None or exc.lineno >= last_line
        _emit_error(
            _classify_compile_error(exc),
            str(exc),
            exc.lineno,
            truncated_guess=bool(truncated and at_end),
        )
        return
    except ValueError as exc:
        # compile() rejects e.g. null bytes before parsing begins.
        _emit_error("ValueError", str(exc), None)
        return
    except BaseException as exc:
        _emit_error(type(exc).__name__, str(exc), None)
        return

    globals_dict = {"__name__": "__main__", "__file__": path}
    try:
        exec(code, globals_dict)
    except SystemExit as exc:
        if exc.code in (None, 0):
            _emit({"ok": True})
        _emit_error(
            "SystemExit", str(exc.code), _deepest_candidate_line(exc, path)
        )
    except BaseException as exc:
        try:
            message = str(exc)
        except BaseException:
            message = ""
        _emit_error(
            type(exc).__name__, message, _deepest_candidate_line(exc, path)
        )
    _emit({"ok": True})


def main() -> None:
    try:
        argv = sys.argv[1:]
        truncated = "--truncated" in argv
        paths = [a for a in argv if a != "--truncated"]
        if not paths:
            _emit_error("Else", "usage: sandbox_shim.py CANDIDATE [--truncated]",
                        None)
        _run(paths[0], truncated)
    except BaseException as exc:  # absolute last resort
        _emit_error("Else", f"shim failure: {exc}", None)


if __name__ == "__main__":
    main()
