"""JSON serialization for all domain types, dataset loading, and the buffer
wire format.

Round-tripping any type through these functions is the identity: floats are
emitted with Python's shortest-roundtrip repr (what `json` does natively),
and the exact-rational fine weight is carried as "numerator/denominator".

Dataset file format: one JSON object per line, UTF-8, LF-terminated:
    {"id": ..., "description": ..., "tests": [{"input", "expected_output",
     "comparison"?}], "ground_truth"?, "max_tokens"?}

Candidates file format: one JSON object per line:
    {"problem_id": ..., "source": ..., "candidate_id"?, "truncated"?}

Buffer wire record: {"problem_id", "source", "tokens", "token_char_spans",
"logprobs", "truncated", "feedback", "rewards", "created_at"} plus
"created_seq" when an entry is echoed back out of the buffer.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable

from .model import (
    BufferEntry,
    CandidateProgram,
    Category,
    Comparison,
    Feedback,
    LossBreakdown,
    Problem,
    RewardBundle,
    SubError,
    TestCase,
    Verdict,
)


def _span(value: Any) -> tuple[int, int]:
    a, b = value
    return (int(a), int(b))


def _fraction_to_json(value: Fraction) -> int | str:
    if value.denominator == 1:
        return int(value)
    return f"{value.numerator}/{value.denominator}"


def _fraction_from_json(value: int | str) -> Fraction:
    return Fraction(value)


# --- per-type encoders ------------------------------------------------------


def test_case_to_dict(test: TestCase) -> dict:
    return {
        "input": test.input,
        "expected_output": test.expected_output,
        "comparison": test.comparison.value,
    }


def test_case_from_dict(data: dict) -> TestCase:
    return TestCase(
        input=data["input"],
        expected_output=data["expected_output"],
        comparison=Comparison(data.get("comparison", Comparison.WHITESPACE.value)),
    )


def problem_to_dict(problem: Problem) -> dict:
    out = {
        "id": problem.id,
        "description": problem.description,
        "tests": [test_case_to_dict(t) for t in problem.tests],
        "max_tokens": problem.max_tokens,
    }
    if problem.ground_truth is not None:
        out["ground_truth"] = problem.ground_truth
    return out


def problem_from_dict(data: dict) -> Problem:
    return Problem(
        id=data["id"],
        description=data.get("description", ""),
        tests=tuple(test_case_from_dict(t) for t in data["tests"]),
        ground_truth=data.get("ground_truth"),
        max_tokens=int(data.get("max_tokens", 64)),
    )


def candidate_to_dict(candidate: CandidateProgram) -> dict:
    return {
        "source": candidate.source,
        "tokens": list(candidate.tokens),
        "token_char_spans": [list(s) for s in candidate.token_char_spans],
        "logprobs": None if candidate.logprobs is None else list(candidate.logprobs),
        "truncated": candidate.truncated,
    }


def candidate_from_dict(data: dict) -> CandidateProgram:
    logprobs = data.get("logprobs")
    return CandidateProgram(
        source=data["source"],
        tokens=tuple(data["tokens"]),
        token_char_spans=tuple(_span(s) for s in data["token_char_spans"]),
        logprobs=None if logprobs is None else tuple(float(x) for x in logprobs),
        truncated=bool(data.get("truncated", False)),
    )


def feedback_to_dict(feedback: Feedback) -> dict:
    return {
        "verdict": feedback.verdict.value,
        "sub_error": None if feedback.sub_error is None else feedback.sub_error.value,
        "category": None if feedback.category is None else feedback.category.value,
        "error_line": feedback.error_line,
        "n_pass": feedback.n_pass,
        "n_fail": feedback.n_fail,
    }


def feedback_from_dict(data: dict) -> Feedback:
    sub = data.get("sub_error")
    cat = data.get("category")
    return Feedback(
        verdict=Verdict(data["verdict"]),
        sub_error=None if sub is None else SubError(sub),
        category=None if cat is None else Category(cat),
        error_line=data.get("error_line"),
        n_pass=int(data.get("n_pass", 0)),
        n_fail=int(data.get("n_fail", 0)),
    )


def rewards_to_dict(rewards: RewardBundle) -> dict:
    return {
        "r_coarse": rewards.r_coarse,
        "r_fine": rewards.r_fine,
        "r_adaptive": rewards.r_adaptive,
        "span_coarse": list(rewards.span_coarse),
        "span_fine": list(rewards.span_fine),
        "span_adaptive": list(rewards.span_adaptive),
        "fine_weight": _fraction_to_json(rewards.fine_weight),
    }


def rewards_from_dict(data: dict) -> RewardBundle:
    return RewardBundle(
        r_coarse=float(data["r_coarse"]),
        r_fine=float(data["r_fine"]),
        r_adaptive=float(data["r_adaptive"]),
        span_coarse=_span(data["span_coarse"]),
        span_fine=_span(data["span_fine"]),
        span_adaptive=_span(data["span_adaptive"]),
        fine_weight=_fraction_from_json(data.get("fine_weight", 0)),
    )


def loss_to_dict(loss: LossBreakdown) -> dict:
    return {
        "l_sl": loss.l_sl,
        "l_coarse": loss.l_coarse,
        "l_fine": loss.l_fine,
        "l_adaptive": loss.l_adaptive,
        "l_total": loss.l_total,
        "per_token_weights": list(loss.per_token_weights),
    }


def loss_from_dict(data: dict) -> LossBreakdown:
    return LossBreakdown(
        l_sl=float(data["l_sl"]),
        l_coarse=float(data["l_coarse"]),
        l_fine=float(data["l_fine"]),
        l_adaptive=float(data["l_adaptive"]),
        l_total=float(data["l_total"]),
        per_token_weights=tuple(float(x) for x in data.get("per_token_weights", ())),
    )


# --- buffer wire format -----------------------------------------------------


def entry_to_wire(entry: BufferEntry, include_seq: bool = True) -> dict:
    out = {
        "problem_id": entry.problem_id,
        **candidate_to_dict(entry.candidate),
        "feedback": feedback_to_dict(entry.feedback),
        "rewards": rewards_to_dict(entry.rewards),
        "created_at": entry.created_at,
    }
    if include_seq:
        out["created_seq"] = entry.created_seq
    return out


def entry_from_wire(data: dict) -> BufferEntry:
    return BufferEntry(
        problem_id=data["problem_id"],
        candidate=candidate_from_dict(data),
        feedback=feedback_from_dict(data["feedback"]),
        rewards=rewards_from_dict(data["rewards"]),
        created_seq=int(data.get("created_seq", 0)),
        created_at=float(data.get("created_at", 0.0)),
    )


def encode_line(data: dict) -> str:
    """One compact, LF-terminated JSON line."""
    return json.dumps(data, separators=(",", ":"), ensure_ascii=False) + "\n"


# --- file loaders -----------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad JSON record: {exc}") from exc


def load_problems(path: str | Path) -> list[Problem]:
    problems = [problem_from_dict(rec) for rec in iter_jsonl(path)]
    seen: set[str] = set()
    for problem in problems:
        if problem.id in seen:
            raise ValueError(f"duplicate problem id {problem.id!r} in {path}")
        seen.add(problem.id)
    return problems


def load_candidate_records(path: str | Path) -> list[dict]:
    """Raw candidate records; tokenization is the caller's concern."""
    records = []
    for rec in iter_jsonl(path):
        if "problem_id" not in rec or "source" not in rec:
            raise ValueError(f"candidate record needs problem_id and source: {rec}")
        records.append(rec)
    return records
