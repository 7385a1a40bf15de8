"""Isolated execution of candidate programs against a problem's tests.

Every test runs in a fresh child interpreter process inside its own scratch
working directory, wrapped by an in-sandbox runner that feeds stdin, forwards
stdout, and emits one sentinel-prefixed JSON report line on stderr:

    __SHIM_REPORT__:{"ok": true}
    __SHIM_REPORT__:{"ok": false, "exception": "NameError", "message": "...",
                     "line": 3, "truncated_guess": false}

The runner is selected in order: explicit `shim_path` argument, the
EXECRL_SHIM environment variable, then a built-in minimal runner that honors
the same contract. The interpreter comes from `interpreter`, EXECRL_PYTHON,
then the running interpreter. A full-fidelity external shim is recommended
for production grading; the built-in runner covers the common exception
classes and line attribution.

The host process survives any candidate behavior: hard crashes become
`crashed` outcomes, infinite loops become `timeout` after the per-test
limit, and runaway process groups are killed as a unit.
"""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import InternalIOError, SandboxUnavailable
from .model import CandidateProgram, Problem

REPORT_SENTINEL = "__SHIM_REPORT__:"

ENV_SHIM = "EXECRL_SHIM"
ENV_PYTHON = "EXECRL_PYTHON"


class OutcomeStatus(Enum):
    OK = "ok"
    WRONG_OUTPUT = "wrong_output"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    CRASHED = "crashed"


@dataclass(frozen=True)
class StructuredError:
    """Shim-reported error record. `truncated_guess` is None when the runner
    did not judge whether a compile error looks like token-limit truncation."""

    exception_name: str
    message: str = ""
    line: int | None = None
    truncated_guess: bool | None = None


@dataclass(frozen=True)
class RawTestOutcome:
    test_index: int
    status: OutcomeStatus
    stdout: str = ""
    stderr: str = ""
    structured_error: StructuredError | None = None
    wall_time: float = 0.0


@dataclass(frozen=True)
class ExecutionLimits:
    per_test_seconds: float = 10.0
    memory_bytes: int | None = None


# Minimal in-sandbox runner honoring the report contract. It binds the
# functions it needs up front so candidate code cannot sabotage the report
# by monkeypatching shared modules.
_BUILTIN_RUNNER = r'''
import json, os, sys

_SENTINEL = "__SHIM_REPORT__:"
_dumps = json.dumps
_write = os.write
_exit = os._exit
_fd = os.dup(2)


def _emit(report):
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.flush()
        except Exception:
            pass
    try:
        _write(_fd, (_SENTINEL + _dumps(report) + "\n").encode("utf-8", "replace"))
    except Exception:
        pass
    _exit(0)


def _candidate_line(exc, path):
    line = None
    tb = exc.__traceback__
    while tb is not None:
        if tb.tb_frame.f_code.co_filename == path:
            line = tb.tb_lineno
        tb = tb.tb_next
    return line


def _main():
    argv = sys.argv[1:]
    truncated = "--truncated" in argv
    path = [a for a in argv if a != "--truncated"][0]
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8", "replace")
    n_lines = max(1, len(text.splitlines()))
    try:
        code = compile(text, path, "exec")
    except SyntaxError as exc:
        name = type(exc).__name__
        msg = str(exc)
        if "triple-quoted" in msg or "EOF in multi-line string" in msg:
            name = "TripleQuotedError"
        at_end = exc.lineno is None or exc.lineno >= n_lines
        _emit({"ok": False, "exception": name, "message": msg,
               "line": exc.lineno, "truncated_guess": bool(truncated and at_end)})
    except ValueError as exc:
        _emit({"ok": False, "exception": "ValueError", "message": str(exc),
               "line": None, "truncated_guess": False})
    try:
        exec(code, {"__name__": "__main__", "__file__": path})
    except SystemExit as exc:
        if exc.code in (None, 0):
            _emit({"ok": True})
        _emit({"ok": False, "exception": "SystemExit", "message": str(exc.code),
               "line": _candidate_line(exc, path), "truncated_guess": False})
    except BaseException as exc:
        _emit({"ok": False, "exception": type(exc).__name__,
               "message": str(exc)[:1000], "line": _candidate_line(exc, path),
               "truncated_guess": False})
    _emit({"ok": True})


_main()
'''


def _resolve_interpreter(interpreter: str | None) -> str:
    return interpreter or os.environ.get(ENV_PYTHON) or sys.executable


def _resolve_shim(shim_path: str | None, scratch: Path) -> Path:
    explicit = shim_path or os.environ.get(ENV_SHIM)
    if explicit:
        path = Path(explicit)
        if not path.is_file():
            raise SandboxUnavailable(f"shim not found: {path}")
        return path
    builtin = scratch / "_runner.py"
    builtin.write_text(_BUILTIN_RUNNER, encoding="utf-8")
    return builtin


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            proc.kill()
        except OSError:
            pass


def _split_report(stderr_text: str) -> tuple[str, dict | None]:
    """Pull the last sentinel report line out of stderr; keep the rest."""
    import json

    report = None
    kept: list[str] = []
    for line in stderr_text.splitlines():
        if line.startswith(REPORT_SENTINEL):
            try:
                report = json.loads(line[len(REPORT_SENTINEL):])
            except json.JSONDecodeError:
                report = None
        else:
            kept.append(line)
    return "\n".join(kept), report


def _outcome_from_run(
    index: int,
    returncode: int,
    stdout: str,
    stderr: str,
    timed_out: bool,
    wall: float,
) -> RawTestOutcome:
    stderr_clean, report = _split_report(stderr)
    if timed_out:
        return RawTestOutcome(index, OutcomeStatus.TIMEOUT, stdout, stderr_clean,
                              None, wall)
    if report is None:
        # No report means the runner itself died (signal, hard crash).
        return RawTestOutcome(index, OutcomeStatus.CRASHED, stdout, stderr_clean,
                              None, wall)
    if report.get("ok"):
        return RawTestOutcome(index, OutcomeStatus.OK, stdout, stderr_clean,
                              None, wall)
    line = report.get("line")
    structured = StructuredError(
        exception_name=str(report.get("exception") or "Else"),
        message=str(report.get("message") or ""),
        line=None if line is None else int(line),
        truncated_guess=report.get("truncated_guess"),
    )
    return RawTestOutcome(index, OutcomeStatus.RUNTIME_ERROR, stdout, stderr_clean,
                          structured, wall)


def _make_preexec(memory_bytes: int | None):
    if memory_bytes is None:
        return None

    def set_limits() -> None:
        import resource

        resource.setrlimit(resource.RLIMIT_AS, (memory_bytes, memory_bytes))

    return set_limits


def execute(
    problem: Problem,
    candidate: CandidateProgram,
    limits: ExecutionLimits = ExecutionLimits(),
    *,
    interpreter: str | None = None,
    interpreter_args: tuple[str, ...] = (),
    shim_path: str | None = None,
    scratch_root: str | None = None,
) -> list[RawTestOutcome]:
    """Run the candidate against every test, one fresh process per test.

    Returns one outcome per test in test order. Output comparison happens
    downstream; this layer only records. All tests run even after failures
    because the pass/fail tally needs the full count.
    """
    if not problem.tests:
        raise ValueError(f"problem {problem.id!r} has no tests")
    if limits.per_test_seconds <= 0:
        raise ValueError("per_test_seconds must be positive")

    python = _resolve_interpreter(interpreter)
    scratch = Path(tempfile.mkdtemp(prefix="execrl-", dir=scratch_root))
    outcomes: list[RawTestOutcome] = []
    try:
        shim = _resolve_shim(shim_path, scratch)
        cand_path = scratch / "candidate.py"
        try:
            cand_path.write_text(candidate.source, encoding="utf-8")
        except OSError as exc:
            raise InternalIOError(f"cannot write candidate source: {exc}") from exc

        argv = [python, *interpreter_args, str(shim), str(cand_path)]
        if candidate.truncated:
            argv.append("--truncated")

        for index, test in enumerate(problem.tests):
            workdir = scratch / f"t{index}"
            workdir.mkdir()
            start = time.monotonic()
            try:
                proc = subprocess.Popen(
                    argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    cwd=workdir,
                    start_new_session=True,
                    preexec_fn=_make_preexec(limits.memory_bytes),
                )
            except FileNotFoundError as exc:
                raise SandboxUnavailable(f"interpreter not found: {python}") from exc
            except OSError as exc:
                raise InternalIOError(f"cannot spawn sandbox process: {exc}") from exc

            timed_out = False
            try:
                out, err = proc.communicate(
                    input=test.input.encode("utf-8"),
                    timeout=limits.per_test_seconds,
                )
            except subprocess.TimeoutExpired:
                timed_out = True
                _kill_tree(proc)
                try:
                    out, err = proc.communicate(timeout=5)
                except (subprocess.TimeoutExpired, OSError):
                    out, err = b"", b""
            except OSError:
                # Candidate closed stdin early; whatever ran still reports.
                _kill_tree(proc)
                out, err = b"", b""
            wall = time.monotonic() - start
            outcomes.append(
                _outcome_from_run(
                    index,
                    proc.returncode if proc.returncode is not None else -1,
                    out.decode("utf-8", "replace"),
                    err.decode("utf-8", "replace"),
                    timed_out,
                    wall,
                )
            )
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return outcomes


def execute_batch(
    jobs: list[tuple[Problem, CandidateProgram]],
    limits: ExecutionLimits = ExecutionLimits(),
    workers: int = 2,
    **execute_kwargs,
) -> list[list[RawTestOutcome]]:
    """Run many (problem, candidate) jobs on a worker pool.

    Results align positionally with `jobs` and match what sequential
    `execute` calls would produce, wall-time jitter aside. Environment
    faults (missing interpreter/shim) propagate; candidate faults never do.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if not jobs:
        return []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(execute, problem, candidate, limits, **execute_kwargs)
            for problem, candidate in jobs
        ]
        return [f.result() for f in futures]
