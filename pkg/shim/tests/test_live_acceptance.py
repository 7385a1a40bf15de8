"""Live-interpreter acceptance: the production shim driving the grading
engine end to end. Prints one PASS line per criterion.

Criteria:
  - Sandbox robustness: a segfaulting candidate, an infinite loop under a
    2 s limit (killed within 2.5 s wall), and a fork-spam candidate all
    complete grading without hanging the host.
  - Shim fidelity: the 14 live fixture programs (one per error kind)
    produce the intended exception class and candidate-source line.
"""

import time
from pathlib import Path

import pytest

from execrl.classify import classify
from execrl.model import Problem, TestCase
from execrl.sandbox import ExecutionLimits, OutcomeStatus, execute
from execrl.tokens import candidate_from_source

SHIM = str(Path(__file__).resolve().parent.parent / "sandbox_shim.py")

# One live program per error kind: (name, source, stdin, expected sub-error,
# expected category, expected line).
LIVE_FIXTURES = [
    ("syntax", "x = (1\nprint(x)", "", "SyntaxError", "U_line", 1),
    ("index", "x = [1]\nprint(x[5])", "", "IndexError", "U_line", 2),
    ("type", "print(1 + 'a')", "", "TypeError", "U_line", 1),
    ("value", "print(int('zz'))", "", "ValueError", "U_line", 1),
    ("eof", "a = input()\nb = input()\nprint(b)", "one", "EOFError", "U_line", 2),
    ("timeout", "while True:\n    pass", "", "TimeoutError", "U_whole", None),
    ("name", "print(undefined_var)", "", "NameError", "U_line", 1),
    ("key", "d = {}\nprint(d['k'])", "", "KeyError", "U_line", 2),
    ("import", "import nonexistent_mod\nprint(1)", "", "ImportError",
     "U_line", 1),
    ("zero_division", "n = 0\nprint(1 / n)", "", "ZeroDivisionError",
     "U_line", 2),
    ("recursion", "def f(n):\n    return f(n + 1)\nprint(f(0))", "",
     "RecursionError", "U_whole", 2),
    ("triple_quoted", 'print("""unfinished', "", "TripleQuotedError",
     "U_ignore", 1),
    ("indentation", "x = 1\n    y = 2", "", "IndentationError", "U_ignore", 2),
    ("else", "x = 1\nx.append(2)", "", "Else", "U_line", 2),
]


def problem_for(name: str, stdin: str) -> Problem:
    return Problem(
        id=name,
        description="",
        tests=(TestCase(input=stdin, expected_output="never-matches"),),
        max_tokens=64,
    )


def grade(name, source, stdin, per_test_seconds=5.0):
    problem = problem_for(name, stdin)
    candidate = candidate_from_source(source)
    outcomes = execute(
        problem,
        candidate,
        ExecutionLimits(per_test_seconds=per_test_seconds),
        shim_path=SHIM,
    )
    return candidate, outcomes, classify(problem, candidate, outcomes)


def test_sandbox_robustness_with_live_interpreter():
    start_all = time.monotonic()

    # segfault: host returns normally, candidate is an Error
    _, outcomes, feedback = grade(
        "segv", "import ctypes\nctypes.string_at(0)\n", ""
    )
    assert outcomes[0].status is OutcomeStatus.CRASHED
    assert feedback.verdict.value == "Error"

    # infinite loop under a 2 s limit: killed within 2.5 s wall
    start = time.monotonic()
    _, outcomes, feedback = grade(
        "spin", "while True:\n    pass", "", per_test_seconds=2.0
    )
    wall = time.monotonic() - start
    assert outcomes[0].status is OutcomeStatus.TIMEOUT
    assert outcomes[0].wall_time >= 2.0
    assert wall < 2.5
    assert feedback.sub_error.value == "TimeoutError"

    # fork spam: the whole process group dies with the timeout
    forker = "import os, time\nfor _ in range(4):\n    os.fork()\ntime.sleep(30)\n"
    start = time.monotonic()
    _, outcomes, feedback = grade("forks", forker, "", per_test_seconds=2.0)
    wall = time.monotonic() - start
    assert outcomes[0].status is OutcomeStatus.TIMEOUT
    assert wall < 10.0
    assert feedback.verdict.value == "Error"

    total = time.monotonic() - start_all
    assert total < 60.0
    print(f"\nPASS: sandbox robustness (segfault, loop, fork spam) in {total:.1f}s")


def test_shim_fidelity_on_live_fixtures():
    start = time.monotonic()
    failures = []
    for name, source, stdin, sub, category, line in LIVE_FIXTURES:
        per_test = 2.0 if name == "timeout" else 5.0
        _, _, feedback = grade(name, source, stdin, per_test_seconds=per_test)
        got = (
            feedback.sub_error.value if feedback.sub_error else None,
            feedback.category.value if feedback.category else None,
            feedback.error_line,
        )
        if got != (sub, category, line):
            failures.append((name, got, (sub, category, line)))
    total = time.monotonic() - start
    assert not failures, failures
    assert total < 30.0
    print(f"\nPASS: shim fidelity 14/14 live fixtures in {total:.1f}s")
