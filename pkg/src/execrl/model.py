"""Shared domain types and their invariant checks.

Every other module consumes these. Types are immutable value objects: safe
to share across threads and to use as fixture data in tests. Construction
never validates; `validate_*` functions report violations explicitly so
that malformed data coming off the wire can be inspected rather than
exploding mid-pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction


class Verdict(Enum):
    PASS = "Pass"
    FAILURE = "Failure"
    ERROR = "Error"


class SubError(Enum):
    """The 14 error kinds a graded candidate can be tagged with."""

    SYNTAX = "SyntaxError"
    INDEX = "IndexError"
    TYPE = "TypeError"
    VALUE = "ValueError"
    EOF = "EOFError"
    TIMEOUT = "TimeoutError"
    NAME = "NameError"
    KEY = "KeyError"
    IMPORT = "ImportError"
    ZERO_DIVISION = "ZeroDivisionError"
    RECURSION = "RecursionError"
    TRIPLE_QUOTED = "TripleQuotedError"
    INDENTATION = "IndentationError"
    ELSE = "Else"


class Category(Enum):
    """Penalty routing for an error: whole program, single line, or none."""

    U_WHOLE = "U_whole"
    U_LINE = "U_line"
    U_IGNORE = "U_ignore"


class Comparison(Enum):
    EXACT = "exact"
    WHITESPACE = "whitespace-normalized"


Span = tuple[int, int]
"""Half-open token index interval [start, end)."""

EMPTY_SPAN: Span = (0, 0)


@dataclass(frozen=True)
class TestCase:
    input: str
    expected_output: str
    comparison: Comparison = Comparison.WHITESPACE


@dataclass(frozen=True)
class Problem:
    """One task: a prompt, its unit tests, and an optional known-good solution."""

    id: str
    description: str
    tests: tuple[TestCase, ...]
    ground_truth: str | None = None
    max_tokens: int = 64


@dataclass(frozen=True)
class CandidateProgram:
    """Generated source plus the token view the policy saw while emitting it.

    `token_char_spans` are half-open character intervals into `source`; they
    tile the source exactly, so slicing at the spans reconstructs it. Tokens
    with empty spans (e.g. an end-of-sequence marker) are allowed as long as
    the tiling holds. `logprobs`, when present, are log p(token_t | prefix)
    under the generating policy at temperature 1.
    """

    source: str
    tokens: tuple[str, ...]
    token_char_spans: tuple[Span, ...]
    logprobs: tuple[float, ...] | None = None
    truncated: bool = False

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Feedback:
    """Grading outcome for one candidate against one problem's test suite."""

    verdict: Verdict
    sub_error: SubError | None = None
    category: Category | None = None
    error_line: int | None = None  # 1-based, interpreter convention
    n_pass: int = 0
    n_fail: int = 0


@dataclass(frozen=True)
class RewardBundle:
    """The three reward granularities with their token spans.

    `fine_weight` is kept as an exact rational so that
    fine_weight * (E - S) == T holds with zero arithmetic slack.
    """

    r_coarse: float
    r_fine: float
    r_adaptive: float
    span_coarse: Span
    span_fine: Span
    span_adaptive: Span
    fine_weight: Fraction = Fraction(0)


@dataclass(frozen=True)
class BufferEntry:
    """One (problem, candidate, feedback, rewards) record in the online buffer.

    `created_seq` is assigned by the buffer at push time; producers submit
    entries with a placeholder 0. `created_at` is the producer-side wall
    clock, carried through the wire format.
    """

    problem_id: str
    candidate: CandidateProgram
    feedback: Feedback
    rewards: RewardBundle
    created_seq: int = 0
    created_at: float = 0.0


@dataclass(frozen=True)
class LossBreakdown:
    """The four loss terms plus the merged per-token gradient coefficients.

    Each RL loss equals sum_t weights[t] * (-logprob_t); `per_token_weights`
    is the elementwise sum of the coarse, fine, and adaptive weight vectors
    (the supervised term is excluded: it attaches to the ground-truth
    sequence, not the sampled one).
    """

    l_sl: float
    l_coarse: float
    l_fine: float
    l_adaptive: float
    l_total: float
    per_token_weights: tuple[float, ...] = field(default=())


# ---------------------------------------------------------------------------
# Invariant checks
# ---------------------------------------------------------------------------


def validate_problem(problem: Problem) -> list[str]:
    out = []
    if not problem.id:
        out.append("problem.id must be non-empty")
    if not problem.tests:
        out.append("problem.tests must be non-empty")
    if problem.max_tokens < 1:
        out.append("problem.max_tokens must be >= 1")
    for i, test in enumerate(problem.tests):
        if test.expected_output is None:
            out.append(f"tests[{i}].expected_output must be defined")
    return out


def validate_candidate(candidate: CandidateProgram) -> list[str]:
    out = []
    if candidate.num_tokens < 1:
        out.append("candidate needs at least one token")
    if len(candidate.tokens) != len(candidate.token_char_spans):
        out.append("token_char_spans length mismatch")
    else:
        cursor = 0
        for i, (start, end) in enumerate(candidate.token_char_spans):
            if start != cursor or end < start:
                out.append(f"token_char_spans[{i}] breaks the source tiling")
                break
            cursor = end
        else:
            if cursor != len(candidate.source):
                out.append("token_char_spans do not cover source exactly")
    if candidate.logprobs is not None:
        if len(candidate.logprobs) != len(candidate.tokens):
            out.append("logprobs length mismatch")
        elif any(lp > 0 or math.isnan(lp) for lp in candidate.logprobs):
            out.append("every logprob must be <= 0 and finite")
    return out


def validate_feedback(feedback: Feedback, num_tests: int | None = None) -> list[str]:
    out = []
    if feedback.n_pass < 0 or feedback.n_fail < 0:
        out.append("test tallies must be non-negative")
    if feedback.verdict is Verdict.PASS:
        if feedback.n_fail != 0:
            out.append("Pass requires n_fail == 0")
        if feedback.sub_error is not None:
            out.append("Pass forbids sub_error")
    else:
        if feedback.n_fail == 0:
            out.append("non-Pass verdict requires n_fail > 0")
    if feedback.verdict is Verdict.ERROR:
        if feedback.sub_error is None:
            out.append("Error requires sub_error")
        if feedback.category is None:
            out.append("Error requires category")
    if feedback.category is Category.U_LINE and feedback.error_line is None:
        out.append("U_line requires error_line")
    if feedback.error_line is not None and feedback.error_line < 1:
        out.append("error_line is 1-based")
    if num_tests is not None and feedback.n_pass + feedback.n_fail > num_tests:
        out.append("n_pass + n_fail exceeds the number of tests")
    return out


def validate_rewards(rewards: RewardBundle, num_tokens: int) -> list[str]:
    out = []
    whole: Span = (0, num_tokens)
    for name, span in (
        ("span_coarse", rewards.span_coarse),
        ("span_fine", rewards.span_fine),
        ("span_adaptive", rewards.span_adaptive),
    ):
        s, e = span
        if not (0 <= s <= e <= num_tokens):
            out.append(f"{name} must satisfy 0 <= S <= E <= T")
    if rewards.span_coarse != whole:
        out.append("span_coarse must cover [0, T)")
    if rewards.span_adaptive != whole:
        out.append("span_adaptive must cover [0, T)")
    if not -1.0 <= rewards.r_coarse <= 1.0:
        out.append("r_coarse out of [-1, 1]")
    if not -0.3 - 1e-12 <= rewards.r_adaptive <= 1.0 + 1e-12:
        out.append("r_adaptive out of [-0.3, 1.0]")
    s, e = rewards.span_fine
    if e > s and rewards.fine_weight != Fraction(num_tokens, e - s):
        out.append("fine_weight must equal T / (E - S) exactly")
    if e == s and rewards.fine_weight != 0:
        out.append("fine_weight must be 0 for an empty fine span")
    return out


def validate_entry(entry: BufferEntry) -> list[str]:
    out = []
    if not entry.problem_id:
        out.append("entry.problem_id must be non-empty")
    out.extend(validate_candidate(entry.candidate))
    out.extend(validate_feedback(entry.feedback))
    if entry.candidate.logprobs is None:
        out.append("buffer entries need candidate.logprobs for the RL loss")
    if not out:
        out.extend(validate_rewards(entry.rewards, entry.candidate.num_tokens))
    return out


def validate(problem: Problem, candidate: CandidateProgram) -> list[str]:
    """Total function: collects every violated invariant, names field and rule."""
    return validate_problem(problem) + validate_candidate(candidate)
