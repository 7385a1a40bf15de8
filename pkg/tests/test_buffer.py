import json
import threading
from collections import Counter
from fractions import Fraction

import pytest

from execrl.buffer import BufferClient, BufferServer, OnlineBuffer
from execrl.errors import EmptyBuffer, MalformedRecord, ValidationFailed
from execrl.model import (
    BufferEntry,
    CandidateProgram,
    Feedback,
    RewardBundle,
    Verdict,
)


def make_entry(problem_id="p", n_tokens=2):
    tokens = tuple("ab"[i % 2] for i in range(n_tokens))
    spans = tuple((i, i + 1) for i in range(n_tokens))
    return BufferEntry(
        problem_id=problem_id,
        candidate=CandidateProgram(
            source="ab"[:n_tokens] if n_tokens <= 2 else "ab" + "a" * (n_tokens - 2),
            tokens=tokens,
            token_char_spans=spans,
            logprobs=(-0.5,) * n_tokens,
        ),
        feedback=Feedback(verdict=Verdict.PASS, n_pass=1, n_fail=0),
        rewards=RewardBundle(
            r_coarse=1.0,
            r_fine=0.0,
            r_adaptive=1.0,
            span_coarse=(0, n_tokens),
            span_fine=(0, 0),
            span_adaptive=(0, n_tokens),
            fine_weight=Fraction(0),
        ),
    )


def test_push_assigns_dense_seqs():
    buffer = OnlineBuffer(capacity=2)
    assert buffer.push(make_entry()) == 1
    assert buffer.size == 1
    assert buffer.push(make_entry()) == 2
    assert buffer.last_seq == 2


def test_fifo_eviction():
    buffer = OnlineBuffer(capacity=2)
    for _ in range(3):
        buffer.push(make_entry())
    seqs = [e.created_seq for e in buffer.snapshot()]
    assert seqs == [2, 3]
    assert buffer.size == 2


def test_push_validates():
    buffer = OnlineBuffer(capacity=2)
    entry = make_entry()
    bad = BufferEntry(
        problem_id=entry.problem_id,
        candidate=CandidateProgram(
            source=entry.candidate.source,
            tokens=entry.candidate.tokens,
            token_char_spans=entry.candidate.token_char_spans,
            logprobs=None,  # RL loss needs these
        ),
        feedback=entry.feedback,
        rewards=entry.rewards,
    )
    with pytest.raises(ValidationFailed, match="logprobs"):
        buffer.push(bad)


def test_concurrent_pushes_keep_top_seqs():
    buffer = OnlineBuffer(capacity=100)
    acks: list[list[int]] = [[] for _ in range(4)]

    def producer(i):
        for _ in range(250):
            acks[i].append(buffer.push(make_entry()))

    threads = [threading.Thread(target=producer, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    all_acks = sorted(a for acks_i in acks for a in acks_i)
    assert all_acks == list(range(1, 1001))  # unique, gap-free
    survivors = sorted(e.created_seq for e in buffer.snapshot())
    assert survivors == list(range(901, 1001))
    assert buffer.size == 100


def test_sample_returns_single_entry_when_small():
    buffer = OnlineBuffer(capacity=4)
    buffer.push(make_entry())
    batch = buffer.sample(batch_size=4, rng_seed=1)
    assert len(batch) == 1
    assert batch[0].created_seq == 1
    assert buffer.size == 1  # sampling does not remove


def test_sample_deterministic_for_seed():
    buffer = OnlineBuffer(capacity=16)
    for _ in range(10):
        buffer.push(make_entry())
    first = [e.created_seq for e in buffer.sample(4, rng_seed=7)]
    second = [e.created_seq for e in buffer.sample(4, rng_seed=7)]
    third = [e.created_seq for e in buffer.sample(4, rng_seed=8)]
    assert first == second
    assert first != third or len(set(first)) == 4


def test_sample_empty_buffer():
    buffer = OnlineBuffer(capacity=4)
    with pytest.raises(EmptyBuffer):
        buffer.sample(1, rng_seed=0)


def test_sample_uniformity():
    buffer = OnlineBuffer(capacity=8)
    for _ in range(5):
        buffer.push(make_entry())
    counts = Counter()
    draws = 10_000
    for i in range(draws):
        (entry,) = buffer.sample(1, rng_seed=i)
        counts[entry.created_seq] += 1
    for seq in range(1, 6):
        assert abs(counts[seq] / draws - 0.2) < 0.02


def test_spill_file_replay(tmp_path):
    spill = tmp_path / "buffer.jsonl"
    buffer = OnlineBuffer(capacity=3, spill_path=spill)
    for _ in range(5):
        buffer.push(make_entry())
    buffer.close()

    revived = OnlineBuffer(capacity=3, spill_path=spill)
    assert [e.created_seq for e in revived.snapshot()] == [3, 4, 5]
    assert revived.push(make_entry()) == 6  # seq continues
    revived.close()


# --- TCP server -------------------------------------------------------------


@pytest.fixture
def server():
    buffer = OnlineBuffer(capacity=2000)
    srv = BufferServer(buffer, "127.0.0.1", 0)
    srv.start()
    yield srv
    srv.shutdown()


def test_wire_push_and_ack(server):
    host, port = server.address
    client = BufferClient(host, port)
    try:
        assert client.push(make_entry()) == 1
        stats = client.stats()
        assert stats["size"] == 1
        assert stats["last_seq"] == 1
    finally:
        client.close()


def test_wire_malformed_line_is_rejected_connection_survives(server):
    host, port = server.address
    client = BufferClient(host, port)
    try:
        nack = client.push_raw('{"op": "push", "entry": {"problem_id"')
        assert nack["ok"] is False
        assert "parse" in nack["error"]
        # same connection keeps working
        assert client.push(make_entry()) == 1
    finally:
        client.close()


def test_wire_sample_round_trip(server):
    host, port = server.address
    client = BufferClient(host, port)
    try:
        pushed = make_entry()
        client.push(pushed)
        entries = client.sample(batch_size=3, seed=5)
        assert len(entries) == 1
        assert entries[0].candidate == pushed.candidate
        assert entries[0].rewards == pushed.rewards
    finally:
        client.close()


def test_wire_sample_empty_nacks(server):
    host, port = server.address
    client = BufferClient(host, port)
    try:
        with pytest.raises(EmptyBuffer):
            client.sample(1, seed=0)
    finally:
        client.close()


def test_two_producers_500_each_dense_seqs(server):
    host, port = server.address

    def producer():
        client = BufferClient(host, port)
        try:
            for _ in range(500):
                client.push(make_entry())
        finally:
            client.close()

    threads = [threading.Thread(target=producer) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert server.buffer.size == 1000
    seqs = sorted(e.created_seq for e in server.buffer.snapshot())
    assert seqs == list(range(1, 1001))
