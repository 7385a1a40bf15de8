import random

from hypothesis import given, settings
from hypothesis import strategies as st

from execrl.tokens import (
    candidate_from_source,
    line_char_interval,
    line_count,
    tokenize,
    tokens_intersecting,
)


def test_basic_lexemes():
    tokens, spans = tokenize("a,b=map(int,input().split())")
    assert tokens[:6] == ("a", ",", "b", "=", "map", "(")
    assert "".join(tokens) == "a,b=map(int,input().split())"
    assert spans[0] == (0, 1)
    assert spans[-1][1] == len("a,b=map(int,input().split())")


def test_whitespace_and_newlines_are_tokens():
    tokens, _ = tokenize("x = 1\n    y\n")
    assert tokens == ("x", " ", "=", " ", "1", "\n", "    ", "y", "\n")


def test_multi_char_operators_stay_whole():
    tokens, _ = tokenize("a==b!=c//d**e")
    assert tokens == ("a", "==", "b", "!=", "c", "//", "d", "**", "e")


def test_empty_source_has_one_empty_token():
    tokens, spans = tokenize("")
    assert tokens == ("",)
    assert spans == ((0, 0),)


@given(st.text(max_size=200))
@settings(max_examples=200, deadline=None)
def test_spans_tile_any_source(source):
    tokens, spans = tokenize(source)
    assert len(tokens) == len(spans)
    rebuilt = "".join(source[s:e] for s, e in spans)
    assert rebuilt == source
    cursor = 0
    for s, e in spans:
        assert s == cursor and e >= s
        cursor = e
    assert cursor == len(source)


def test_line_count_ignores_trailing_newline():
    assert line_count("a\nb") == 2
    assert line_count("a\nb\n") == 2
    assert line_count("") == 0
    assert line_count("\n") == 1


def test_line_char_interval_includes_newline():
    source = "ab\ncd\n"
    assert line_char_interval(source, 1) == (0, 3)
    assert line_char_interval(source, 2) == (3, 6)
    assert source[0:3] == "ab\n"


def test_line_interval_of_last_line_without_newline():
    assert line_char_interval("ab\ncd", 2) == (3, 5)


def test_tokens_intersecting_minimal_range():
    # Derived by hand: line 1 is tokens 0..4, line 2 is tokens 5..8.
    source = "a=1 \nprint(b)"
    candidate = candidate_from_source(source)
    assert candidate.tokens == ("a", "=", "1", " ", "\n", "print", "(", "b", ")")
    interval = line_char_interval(source, 2)
    assert tokens_intersecting(candidate.token_char_spans, interval) == (5, 9)
    interval1 = line_char_interval(source, 1)
    assert tokens_intersecting(candidate.token_char_spans, interval1) == (0, 5)


def test_tokens_intersecting_matches_bruteforce():
    rng = random.Random(7)
    alphabet = "ab1 \n().,"
    for _ in range(200):
        source = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40)))
        _, spans = tokenize(source)
        for line_no in range(1, line_count(source) + 1):
            lo, hi = line_char_interval(source, line_no)
            hits = [
                i for i, (s, e) in enumerate(spans) if max(s, lo) < min(e, hi)
            ]
            expected = (hits[0], hits[-1] + 1) if hits else (0, 0)
            assert tokens_intersecting(spans, (lo, hi)) == expected
