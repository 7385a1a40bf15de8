"""Turn raw per-test outcomes into one graded Feedback per candidate.

Grading rules:
  - A test counts as passed when its process status is ok AND its stdout
    matches the expected output under the test's comparison rule.
  - Any runtime_error / timeout / crashed outcome makes the verdict Error;
    the first such outcome (lowest test index) fixes the sub-error and the
    faulting line, so the verdict is deterministic under outcome reordering
    past the first error.
  - Otherwise a candidate that misses any expected output is a Failure.

Error kinds map to penalty categories as follows: timeouts and recursion
blowups penalize the whole program; unterminated triple quotes and
indentation faults are ignored (cause too ambiguous to localize); syntax
errors penalize the whole program when they look like token-limit
truncation and the faulting line otherwise; every other kind penalizes the
faulting line. A line-kind error with no usable line number (hard crash) is
escalated to whole-program, since nothing narrower can be pointed at.
"""

from __future__ import annotations

from collections import Counter

from .errors import EmptyInput, LineOutOfRange, MismatchedOutcomeCount
from .model import (
    EMPTY_SPAN,
    CandidateProgram,
    Category,
    Comparison,
    Feedback,
    Problem,
    Span,
    SubError,
    Verdict,
)
from .sandbox import OutcomeStatus, RawTestOutcome
from .tokens import line_char_interval, line_count, tokens_intersecting

_ERROR_STATUSES = frozenset(
    {OutcomeStatus.RUNTIME_ERROR, OutcomeStatus.TIMEOUT, OutcomeStatus.CRASHED}
)

# Exception class name -> error kind. Subclass names the interpreter may
# report are folded into their canonical row; anything unknown is Else.
_NAME_TO_KIND = {
    "SyntaxError": SubError.SYNTAX,
    "IndexError": SubError.INDEX,
    "TypeError": SubError.TYPE,
    "ValueError": SubError.VALUE,
    "EOFError": SubError.EOF,
    "TimeoutError": SubError.TIMEOUT,
    "NameError": SubError.NAME,
    "UnboundLocalError": SubError.NAME,
    "KeyError": SubError.KEY,
    "ImportError": SubError.IMPORT,
    "ModuleNotFoundError": SubError.IMPORT,
    "ZeroDivisionError": SubError.ZERO_DIVISION,
    "RecursionError": SubError.RECURSION,
    "TripleQuotedError": SubError.TRIPLE_QUOTED,
    "IndentationError": SubError.INDENTATION,
    "TabError": SubError.INDENTATION,
}

_WHOLE_KINDS = frozenset({SubError.TIMEOUT, SubError.RECURSION})
_IGNORE_KINDS = frozenset({SubError.TRIPLE_QUOTED, SubError.INDENTATION})


def outputs_match(actual: str, expected: str, comparison: Comparison) -> bool:
    if comparison is Comparison.EXACT:
        return actual == expected
    left = [line.rstrip() for line in actual.rstrip().splitlines()]
    right = [line.rstrip() for line in expected.rstrip().splitlines()]
    return left == right


def kind_of_exception(name: str) -> SubError:
    return _NAME_TO_KIND.get(name, SubError.ELSE)


def _looks_truncated(candidate: CandidateProgram, line: int | None) -> bool:
    # Fallback when the runner did not report a truncation guess: a compile
    # error at (or past) the last line of a capped generation.
    if not candidate.truncated:
        return False
    return line is None or line >= line_count(candidate.source)


def _categorize(
    kind: SubError, candidate: CandidateProgram, outcome: RawTestOutcome
) -> tuple[Category, int | None]:
    line = None
    truncated_guess: bool | None = None
    if outcome.structured_error is not None:
        line = outcome.structured_error.line
        truncated_guess = outcome.structured_error.truncated_guess

    if kind in _WHOLE_KINDS:
        return Category.U_WHOLE, line
    if kind in _IGNORE_KINDS:
        return Category.U_IGNORE, line
    if kind is SubError.SYNTAX:
        if truncated_guess is None:
            truncated_guess = _looks_truncated(candidate, line)
        return (Category.U_WHOLE if truncated_guess else Category.U_LINE), line
    if line is None:
        # Line-localized kind without a line (e.g. a hard crash): nothing
        # narrower than the whole program can be blamed.
        return Category.U_WHOLE, None
    return Category.U_LINE, line


def classify(
    problem: Problem,
    candidate: CandidateProgram,
    outcomes: list[RawTestOutcome],
) -> Feedback:
    """Collapse per-test outcomes into a single verdict with a full tally."""
    if len(outcomes) != len(problem.tests):
        raise MismatchedOutcomeCount(
            f"{len(outcomes)} outcomes for {len(problem.tests)} tests"
        )

    n_pass = 0
    first_error: RawTestOutcome | None = None
    for test, outcome in zip(problem.tests, outcomes):
        if outcome.status is OutcomeStatus.OK and outputs_match(
            outcome.stdout, test.expected_output, test.comparison
        ):
            n_pass += 1
        elif outcome.status in _ERROR_STATUSES and first_error is None:
            first_error = outcome
    n_fail = len(outcomes) - n_pass

    if first_error is not None:
        if first_error.status is OutcomeStatus.TIMEOUT:
            kind = SubError.TIMEOUT
        elif first_error.structured_error is not None:
            kind = kind_of_exception(first_error.structured_error.exception_name)
        else:
            kind = SubError.ELSE
        category, line = _categorize(kind, candidate, first_error)
        return Feedback(
            verdict=Verdict.ERROR,
            sub_error=kind,
            category=category,
            error_line=line,
            n_pass=n_pass,
            n_fail=n_fail,
        )
    if n_fail == 0:
        return Feedback(verdict=Verdict.PASS, n_pass=n_pass, n_fail=0)
    return Feedback(verdict=Verdict.FAILURE, n_pass=n_pass, n_fail=n_fail)


def locate_span(candidate: CandidateProgram, feedback: Feedback) -> Span:
    """Token interval [S, E) charged by the fine-grained penalty."""
    if feedback.verdict is not Verdict.ERROR:
        raise ValueError("locate_span is only defined for Error verdicts")
    if feedback.category is Category.U_IGNORE:
        return EMPTY_SPAN
    if feedback.category is Category.U_WHOLE:
        return (0, candidate.num_tokens)
    line = feedback.error_line
    if line is None or line < 1 or line > line_count(candidate.source):
        raise LineOutOfRange(
            f"error_line {line} outside 1..{line_count(candidate.source)}"
        )
    interval = line_char_interval(candidate.source, line)
    span = tokens_intersecting(candidate.token_char_spans, interval)
    if span == EMPTY_SPAN:
        raise LineOutOfRange(f"line {line} intersects no token span")
    return span


def error_distribution(
    feedbacks: list[Feedback],
) -> tuple[dict[str, float], dict[str, float]]:
    """(verdict fractions, sub-error fractions among Error verdicts)."""
    if not feedbacks:
        raise EmptyInput("no feedbacks to aggregate")
    verdicts = Counter(fb.verdict.value for fb in feedbacks)
    total = len(feedbacks)
    verdict_frac = {name: count / total for name, count in sorted(verdicts.items())}

    errors = [fb for fb in feedbacks if fb.verdict is Verdict.ERROR]
    sub_frac: dict[str, float] = {}
    if errors:
        subs = Counter(
            fb.sub_error.value for fb in errors if fb.sub_error is not None
        )
        sub_frac = {name: count / len(errors) for name, count in sorted(subs.items())}
    return verdict_frac, sub_frac
