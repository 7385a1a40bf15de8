"""REINFORCE-style losses from rewards, baselines, and log-probabilities.

Each RL term has the shape  -weight * (reward - baseline) * sum(logprobs over
span)  and is reported together with its per-token gradient coefficients:
loss == sum_t w[t] * (-logprob_t) with w[t] = weight * advantage inside the
span and 0 outside. The fine-grained term carries no baseline (a historical
best for a varying span is ill-defined) and is scaled by the exact rational
alpha from the reward bundle. Losses are per-sample objective contributions:
negative values are legal, trainers average batches however they see fit.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .errors import MissingLogprobs, SpanOutOfRange
from .model import BufferEntry, LossBreakdown, Span


class BaselineRewards(NamedTuple):
    r_coarse: float = 0.0
    r_adaptive: float = 0.0


def sl_loss(logprobs_of_ground_truth: Sequence[float] | None) -> float:
    """Cross-entropy of the ground-truth sequence under the policy."""
    if logprobs_of_ground_truth is None:
        raise MissingLogprobs("supervised loss needs ground-truth logprobs")
    return -sum(logprobs_of_ground_truth)


def rl_loss(
    logprobs: Sequence[float],
    reward: float,
    baseline_reward: float,
    span: Span,
    weight: float = 1.0,
) -> tuple[float, tuple[float, ...]]:
    """(loss, per-token weights) for one reward over one token span."""
    if logprobs is None:
        raise MissingLogprobs("RL loss needs per-token logprobs")
    start, end = span
    if not 0 <= start <= end <= len(logprobs):
        raise SpanOutOfRange(f"span {span} outside [0, {len(logprobs)}]")
    coefficient = float(weight * (reward - baseline_reward))
    weights = tuple(
        coefficient if start <= t < end else 0.0 for t in range(len(logprobs))
    )
    loss = coefficient * -sum(logprobs[start:end])
    return loss, weights


def _merge(*vectors: tuple[float, ...]) -> tuple[float, ...]:
    return tuple(sum(ws) for ws in zip(*vectors))


def total_loss(
    entry: BufferEntry,
    baseline: BaselineRewards = BaselineRewards(),
    ground_truth_logprobs: Sequence[float] | None = None,
    feedbacks: frozenset[str] = frozenset({"coarse", "fine", "adaptive"}),
) -> LossBreakdown:
    """All four loss terms for one buffer entry.

    `feedbacks` selects which RL granularities are active (ablation knob);
    inactive terms contribute 0 loss and zero weights. The supervised term
    is 0 when no ground-truth logprobs are supplied.
    """
    logprobs = entry.candidate.logprobs
    if logprobs is None:
        raise MissingLogprobs("buffer entry lacks candidate logprobs")
    rewards = entry.rewards
    num_tokens = entry.candidate.num_tokens
    zero = (0.0,) * num_tokens

    l_coarse, w_coarse = (0.0, zero)
    if "coarse" in feedbacks:
        l_coarse, w_coarse = rl_loss(
            logprobs, rewards.r_coarse, baseline.r_coarse, rewards.span_coarse
        )
    l_fine, w_fine = (0.0, zero)
    if "fine" in feedbacks and rewards.r_fine != 0.0:
        l_fine, w_fine = rl_loss(
            logprobs, rewards.r_fine, 0.0, rewards.span_fine,
            weight=rewards.fine_weight,
        )
    l_adaptive, w_adaptive = (0.0, zero)
    if "adaptive" in feedbacks:
        l_adaptive, w_adaptive = rl_loss(
            logprobs, rewards.r_adaptive, baseline.r_adaptive, rewards.span_adaptive
        )
    l_sl = 0.0
    if ground_truth_logprobs is not None:
        l_sl = sl_loss(ground_truth_logprobs)

    return LossBreakdown(
        l_sl=l_sl,
        l_coarse=l_coarse,
        l_fine=l_fine,
        l_adaptive=l_adaptive,
        l_total=l_sl + l_coarse + l_fine + l_adaptive,
        per_token_weights=_merge(w_coarse, w_fine, w_adaptive),
    )
