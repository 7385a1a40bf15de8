import json
import random

import numpy as np
import pytest

from execrl.model import Problem, TestCase, Verdict
from execrl.policy import EOS, ToyPolicy
from execrl.trainer import (
    CachingRunner,
    ExperimentConfig,
    TrainItem,
    batch_gradient,
    batch_loss,
    evaluate_greedy,
    load_toy_suite,
    run_experiment,
    train_step,
    warm_start,
)

# Two-problem subset keeps executor traffic tiny in module tests.
TINY = [p for p in load_toy_suite() if p.id in ("echo", "succ")]


def numeric_gradient(policy, items, coords, step=1e-5):
    """Central-difference oracle over selected (bucket, vocab) coordinates."""
    out = {}
    for bucket, v in coords:
        original = policy.params[bucket, v]
        policy.params[bucket, v] = original + step
        up = batch_loss(policy, items)
        policy.params[bucket, v] = original - step
        down = batch_loss(policy, items)
        policy.params[bucket, v] = original
        out[(bucket, v)] = (up - down) / (2 * step)
    return out


def random_items(policy, rng, n_items=3):
    items = []
    for _ in range(n_items):
        length = rng.randint(2, 10)
        tokens = tuple(rng.choice(policy.vocab) for _ in range(length))
        weights = tuple(
            rng.choice([0.0, 1.0, -0.6, 2.5, -0.3]) for _ in range(length)
        )
        items.append(TrainItem(f"p{rng.randint(0, 3)}", tokens, weights))
    return items


def coords_for(policy, items, rng, extra=4):
    coords = set()
    for item in items:
        for bucket in policy.buckets_for(item.problem_id, item.tokens):
            coords.add((bucket, rng.randrange(len(policy.vocab))))
    for _ in range(extra):  # untouched coordinates, gradient should be ~0
        coords.add(
            (rng.randrange(policy.num_buckets), rng.randrange(len(policy.vocab)))
        )
    return sorted(coords)


def test_gradient_matches_finite_differences():
    rng = random.Random(17)
    for draw in range(5):
        policy = ToyPolicy.random_init(seed=draw, scale=1.0, num_buckets=256)
        items = random_items(policy, rng)
        grad, _ = batch_gradient(policy, items)
        numeric = numeric_gradient(policy, items, coords_for(policy, items, rng))
        for (bucket, v), fd in numeric.items():
            analytic = grad[bucket, v]
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            assert rel < 1e-4, (draw, bucket, v, analytic, fd)


def test_zero_advantage_batch_leaves_params_unchanged():
    policy = ToyPolicy.random_init(seed=1)
    before = policy.params.copy()
    items = [TrainItem("p", ("print", "(", ")"), (0.0, 0.0, 0.0))]
    stats = train_step(policy, items, lr=0.5)
    assert stats["loss"] == 0.0
    assert np.array_equal(policy.params, before)


def test_positive_advantage_increases_sequence_logprob():
    policy = ToyPolicy.random_init(seed=2)
    tokens = policy.tokens_of_source("print(input())")
    assert tokens is not None
    before = sum(policy.sequence_logprobs("echo", tokens))
    items = [TrainItem("echo", tokens, (1.0,) * len(tokens))]
    train_step(policy, items, lr=0.5)
    after = sum(policy.sequence_logprobs("echo", tokens))
    assert after > before


def test_negative_weights_decrease_sequence_logprob():
    policy = ToyPolicy.random_init(seed=3)
    tokens = ("print", "(", "c", ")", EOS)
    before = sum(policy.sequence_logprobs("p", tokens))
    items = [TrainItem("p", tokens, (-0.6,) * len(tokens))]
    train_step(policy, items, lr=0.5)
    after = sum(policy.sequence_logprobs("p", tokens))
    assert after < before


def test_warm_start_improves_ground_truth_likelihood():
    policy = ToyPolicy.random_init(seed=4, scale=1.5)
    problem = TINY[0]
    tokens = policy.tokens_of_source(problem.ground_truth)
    before = sum(policy.sequence_logprobs(problem.id, tokens))
    warm_start(policy, TINY, steps=10, lr=0.4)
    after = sum(policy.sequence_logprobs(problem.id, tokens))
    assert after > before


def test_train_step_rejects_bad_lr():
    policy = ToyPolicy.random_init(seed=5)
    with pytest.raises(ValueError):
        train_step(policy, [], lr=0.0)


def tiny_config(**overrides):
    base = dict(
        mode="online",
        steps=2,
        seed=0,
        samples_per_problem=2,
        batch_size=6,
        warmstart_steps=4,
        warmstart_lr=0.4,
        lr=0.5,
        per_test_seconds=2.0,
        workers=2,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


def test_steps_zero_is_initial_evaluation_only():
    config = tiny_config(steps=0, warmstart_steps=0)
    metrics = run_experiment(config, problems=TINY)
    assert len(metrics) == 1
    assert metrics[0]["round"] == 0

    # the reported greedy rate is exactly the untrained policy's evaluation
    policy = ToyPolicy.random_init(seed=config.seed, scale=config.init_scale)
    runner = CachingRunner(workers=2, interpreter_args=("-S",))
    reference = evaluate_greedy(policy, TINY, runner)
    assert metrics[0]["greedy_pass_rate"] == reference["pass_rate"]
    assert 0.0 <= metrics[0]["pass_rate"] <= 1.0


def test_identical_seed_and_config_give_identical_series(tmp_path):
    config = tiny_config()
    first = run_experiment(config, problems=TINY,
                           metrics_path=tmp_path / "a.jsonl")
    second = run_experiment(config, problems=TINY,
                            metrics_path=tmp_path / "b.jsonl")
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()


def test_metrics_series_shape_and_fields():
    config = tiny_config()
    metrics = run_experiment(config, problems=TINY)
    assert len(metrics) == config.steps + 1
    for row in metrics:
        assert set(row) >= {"round", "pass_rate", "verdicts", "loss"}
        assert abs(sum(row["verdicts"].values()) - 1.0) < 1e-9
    for row in metrics[1:]:
        assert set(row["loss"]) == {
            "l_sl", "l_coarse", "l_fine", "l_adaptive", "l_total"
        }


def test_offline_mode_runs_and_differs_only_in_generation():
    config = tiny_config(mode="offline")
    metrics = run_experiment(config, problems=TINY)
    assert len(metrics) == config.steps + 1


def test_feedback_subset_restricts_losses():
    config = tiny_config(feedbacks=["coarse"])
    metrics = run_experiment(config, problems=TINY)
    for row in metrics[1:]:
        assert row["loss"]["l_fine"] == 0.0
        assert row["loss"]["l_adaptive"] == 0.0


def test_caching_runner_reuses_results(echo_problem):
    runner = CachingRunner(workers=2)
    policy = ToyPolicy.random_init(seed=0)
    candidate = policy.generate(echo_problem, temperature=0.0)
    first = runner.run_one(echo_problem, candidate)
    calls = runner.spawn_calls
    second = runner.run_one(echo_problem, candidate)
    assert second == first
    assert runner.spawn_calls == calls


def test_evaluate_greedy_on_solved_problem():
    policy = ToyPolicy.random_init(seed=0, scale=0.5)
    warm_start(policy, TINY, steps=60, lr=0.5)
    runner = CachingRunner(workers=2, interpreter_args=("-S",))
    result = evaluate_greedy(policy, TINY, runner)
    assert result["pass_rate"] == 1.0
    assert result["verdicts"][Verdict.PASS.value] == 1.0
