"""Deterministic lexeme tokenizer and line/span geometry helpers.

The engine's span arithmetic is defined over half-open character intervals
that tile the source exactly, so any tokenizer honoring that tiling (an LLM
tokenizer included) can be substituted. The built-in one below is
model-independent: identifier/number runs, a small set of multi-character
operators, single punctuation characters, horizontal whitespace runs, and
newlines each become one token whose span is its exact slice of the source.
"""

from __future__ import annotations

from .model import CandidateProgram, Span

_MULTI_CHAR_OPS = (
    "**=", "//=", "<<=", ">>=", "...",
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "->", ":=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> tuple[tuple[str, ...], tuple[Span, ...]]:
    """Split source into lexemes whose spans tile it exactly.

    The empty source maps to a single empty token so that every candidate
    has at least one token (T >= 1).
    """
    if source == "":
        return ("",), ((0, 0),)

    tokens: list[str] = []
    spans: list[Span] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            j = i + 1
        elif ch in " \t":
            j = i + 1
            while j < n and source[j] in " \t":
                j += 1
        elif _is_word_char(ch):
            j = i + 1
            while j < n and _is_word_char(source[j]):
                j += 1
        else:
            for op in _MULTI_CHAR_OPS:
                if source.startswith(op, i):
                    j = i + len(op)
                    break
            else:
                j = i + 1
        tokens.append(source[i:j])
        spans.append((i, j))
        i = j
    return tuple(tokens), tuple(spans)


def candidate_from_source(
    source: str,
    logprobs: tuple[float, ...] | None = None,
    truncated: bool = False,
) -> CandidateProgram:
    tokens, spans = tokenize(source)
    return CandidateProgram(
        source=source,
        tokens=tokens,
        token_char_spans=spans,
        logprobs=logprobs,
        truncated=truncated,
    )


def line_count(source: str) -> int:
    """Number of physical lines; a trailing newline does not open a new line."""
    return len(source.splitlines())


def line_char_interval(source: str, line_no: int) -> Span:
    """Character interval of 1-based line `line_no`, trailing newline included.

    Including the newline keeps the interval non-empty for blank lines, so a
    line that exists always intersects at least one token span.
    """
    if line_no < 1:
        raise ValueError(f"line numbers are 1-based, got {line_no}")
    start = 0
    current = 1
    n = len(source)
    while current < line_no:
        nl = source.find("\n", start)
        if nl < 0:
            raise ValueError(f"line {line_no} beyond end of source")
        start = nl + 1
        current += 1
    if start >= n and line_no > 1:
        raise ValueError(f"line {line_no} beyond end of source")
    nl = source.find("\n", start)
    end = n if nl < 0 else nl + 1
    return (start, end)


def tokens_intersecting(
    spans: tuple[Span, ...], interval: Span
) -> Span:
    """Minimal token index range [S, E) whose char spans intersect `interval`.

    Spans are ascending and tile the source, so the intersecting set is
    contiguous. Returns the empty span (0, 0) when nothing intersects.
    """
    lo, hi = interval
    first = None
    last = None
    for idx, (s, e) in enumerate(spans):
        if max(s, lo) < min(e, hi):
            if first is None:
                first = idx
            last = idx
    if first is None or last is None:
        return (0, 0)
    return (first, last + 1)
