"""Reward computation at three granularities, plus the per-problem
historical-best baseline register.

Reward ladder (coarse): Pass 1.0 > Failure -0.3 > non-syntax Error -0.6 >
syntax-family Error -1.0. The fine-grained term penalizes only the token
span implicated by the error, rescaled by the exact rational weight
alpha = T / (E - S) so its gradient magnitude matches a whole-sequence
reward. The adaptive term interpolates -0.3 .. 1.0 linearly in the passed
fraction of tests.

All scalar rewards are computed through exact rational arithmetic and then
rounded once to float, so equal inputs give bit-identical outputs.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .classify import locate_span
from .errors import EmptySpanWithPenalty, ZeroTests
from .model import (
    EMPTY_SPAN,
    CandidateProgram,
    Category,
    Feedback,
    RewardBundle,
    Span,
    SubError,
    Verdict,
)

REWARD_PASS = 1.0
REWARD_FAILURE = -0.3
REWARD_ERROR = -0.6
REWARD_SYNTAX_ERROR = -1.0
DEFAULT_FINE_PENALTY = -0.3

# Syntax-family kinds share the strongest coarse penalty: the interpreter
# rejects these programs before any test semantics apply.
_SYNTAX_FAMILY = frozenset(
    {SubError.SYNTAX, SubError.TRIPLE_QUOTED, SubError.INDENTATION}
)


def coarse_reward(feedback: Feedback) -> float:
    if feedback.verdict is Verdict.PASS:
        return REWARD_PASS
    if feedback.verdict is Verdict.FAILURE:
        return REWARD_FAILURE
    if feedback.sub_error in _SYNTAX_FAMILY:
        return REWARD_SYNTAX_ERROR
    return REWARD_ERROR


def fine_reward(
    feedback: Feedback,
    span: Span,
    num_tokens: int,
    penalty: float = DEFAULT_FINE_PENALTY,
) -> tuple[float, Fraction]:
    """(reward, alpha) for the fine-grained term; inactive -> (0.0, 0)."""
    if penalty > 0:
        raise ValueError("fine penalty must be <= 0")
    if feedback.verdict is not Verdict.ERROR:
        return 0.0, Fraction(0)
    if feedback.category is Category.U_IGNORE:
        return 0.0, Fraction(0)
    start, end = span
    if end <= start:
        raise EmptySpanWithPenalty(
            f"category {feedback.category} with empty span {span}"
        )
    return penalty, Fraction(num_tokens, end - start)


def adaptive_reward(feedback: Feedback) -> float:
    total = feedback.n_pass + feedback.n_fail
    if total < 1:
        raise ZeroTests("adaptive reward needs at least one tallied test")
    exact = Fraction(-3, 10) + Fraction(13, 10) * Fraction(feedback.n_pass, total)
    return float(exact)


def bundle(
    feedback: Feedback,
    candidate: CandidateProgram,
    penalty: float = DEFAULT_FINE_PENALTY,
) -> RewardBundle:
    """Compose the three rewards for one graded candidate."""
    num_tokens = candidate.num_tokens
    whole: Span = (0, num_tokens)
    if feedback.verdict is Verdict.ERROR:
        span_fine = locate_span(candidate, feedback)
        r_fine, alpha = fine_reward(feedback, span_fine, num_tokens, penalty)
    else:
        span_fine, r_fine, alpha = EMPTY_SPAN, 0.0, Fraction(0)
    return RewardBundle(
        r_coarse=coarse_reward(feedback),
        r_fine=r_fine,
        r_adaptive=adaptive_reward(feedback),
        span_coarse=whole,
        span_fine=span_fine,
        span_adaptive=whole,
        fine_weight=alpha,
    )


# ---------------------------------------------------------------------------
# Historical-best baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineRecord:
    best_candidate_id: str
    best_r_coarse: float
    best_r_adaptive: float
    updated_seq: int


@dataclass(frozen=True)
class BaselineUpdate:
    updated: bool
    prev_r_coarse: float
    prev_r_adaptive: float


class BaselineRegister:
    """Per-problem best-so-far rewards, ranked by the adaptive reward.

    The adaptive reward totally orders candidates strictly finer than the
    verdict buckets, so it decides which candidate is the historical best;
    that candidate's coarse reward is kept alongside for the coarse
    advantage. Before a problem has produced any sample its baseline
    rewards read as 0.0. Updates are atomic: compare-and-swap under a lock,
    ties keep the incumbent, so best_r_adaptive never decreases.
    """

    def __init__(self) -> None:
        self._records: dict[str, BaselineRecord] = {}
        self._lock = threading.Lock()
        self._update_count = 0

    def get(self, problem_id: str) -> tuple[float, float]:
        """(r_coarse, r_adaptive) of the current best, or (0.0, 0.0)."""
        with self._lock:
            record = self._records.get(problem_id)
        if record is None:
            return 0.0, 0.0
        return record.best_r_coarse, record.best_r_adaptive

    def record(self, problem_id: str) -> BaselineRecord | None:
        with self._lock:
            return self._records.get(problem_id)

    def update(
        self, problem_id: str, candidate_id: str, rewards: RewardBundle
    ) -> BaselineUpdate:
        with self._lock:
            record = self._records.get(problem_id)
            prev_coarse = record.best_r_coarse if record else 0.0
            prev_adaptive = record.best_r_adaptive if record else 0.0
            improved = record is None or rewards.r_adaptive > record.best_r_adaptive
            if improved:
                self._update_count += 1
                self._records[problem_id] = BaselineRecord(
                    best_candidate_id=candidate_id,
                    best_r_coarse=rewards.r_coarse,
                    best_r_adaptive=rewards.r_adaptive,
                    updated_seq=self._update_count,
                )
            return BaselineUpdate(improved, prev_coarse, prev_adaptive)

    # Persistence lets a training run resume with its advantage history.
    def to_json(self) -> str:
        with self._lock:
            payload = {
                pid: {
                    "best_candidate_id": rec.best_candidate_id,
                    "best_r_coarse": rec.best_r_coarse,
                    "best_r_adaptive": rec.best_r_adaptive,
                    "updated_seq": rec.updated_seq,
                }
                for pid, rec in self._records.items()
            }
            return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BaselineRegister":
        register = cls()
        payload = json.loads(text)
        for pid, rec in payload.items():
            register._records[pid] = BaselineRecord(
                best_candidate_id=rec["best_candidate_id"],
                best_r_coarse=float(rec["best_r_coarse"]),
                best_r_adaptive=float(rec["best_r_adaptive"]),
                updated_seq=int(rec["updated_seq"]),
            )
        if register._records:
            register._update_count = max(
                rec.updated_seq for rec in register._records.values()
            )
        return register

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BaselineRegister":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def update_baseline(
    register: BaselineRegister,
    problem_id: str,
    candidate_id: str,
    rewards: RewardBundle,
) -> BaselineUpdate:
    """Module-level convenience mirroring BaselineRegister.update."""
    return register.update(problem_id, candidate_id, rewards)
