from execrl.model import (
    CandidateProgram,
    Category,
    Feedback,
    Problem,
    SubError,
    TestCase,
    Verdict,
    validate,
    validate_candidate,
    validate_feedback,
)
from execrl.tokens import candidate_from_source


def make_candidate(**overrides):
    base = dict(
        source="print(1)",
        tokens=("print", "(", "1", ")"),
        token_char_spans=((0, 5), (5, 6), (6, 7), (7, 8)),
        logprobs=(-0.1, -0.2, -0.3, -0.4),
    )
    base.update(overrides)
    return CandidateProgram(**base)


def test_well_formed_problem_and_candidate(echo_problem):
    assert validate(echo_problem, make_candidate()) == []


def test_logprobs_length_mismatch():
    bad = make_candidate(logprobs=(-0.1, -0.2, -0.3))
    violations = validate_candidate(bad)
    assert violations == ["logprobs length mismatch"]


def test_error_feedback_requires_sub_error():
    fb = Feedback(verdict=Verdict.ERROR, n_pass=0, n_fail=3)
    violations = validate_feedback(fb)
    assert any("sub_error" in v for v in violations)
    assert any("category" in v for v in violations)


def test_positive_logprob_rejected():
    bad = make_candidate(logprobs=(-0.1, 0.2, -0.3, -0.4))
    assert validate_candidate(bad) == ["every logprob must be <= 0 and finite"]


def test_span_tiling_violations():
    gap = make_candidate(token_char_spans=((0, 5), (6, 6), (6, 7), (7, 8)))
    assert any("tiling" in v for v in validate_candidate(gap))
    short = make_candidate(token_char_spans=((0, 5), (5, 6), (6, 7), (7, 7)))
    assert any("cover source" in v for v in validate_candidate(short))


def test_empty_problem_fields():
    problem = Problem(id="", description="", tests=(), max_tokens=0)
    violations = [v.split(" must")[0] for v in validate(problem, make_candidate())]
    assert "problem.id" in violations
    assert "problem.tests" in violations
    assert "problem.max_tokens" in violations


def test_u_line_needs_error_line():
    fb = Feedback(
        verdict=Verdict.ERROR,
        sub_error=SubError.NAME,
        category=Category.U_LINE,
        n_fail=1,
    )
    assert validate_feedback(fb) == ["U_line requires error_line"]


def test_tally_cannot_exceed_test_count():
    fb = Feedback(verdict=Verdict.PASS, n_pass=5, n_fail=0)
    assert validate_feedback(fb, num_tests=3) == [
        "n_pass + n_fail exceeds the number of tests"
    ]


def test_source_reconstruction_from_spans():
    source = "a, b = map(int, input().split())\nprint(a + b)\n"
    candidate = candidate_from_source(source)
    rebuilt = "".join(
        candidate.source[s:e] for s, e in candidate.token_char_spans
    )
    assert rebuilt == source
    assert validate_candidate(candidate) == []


def test_pass_with_failures_is_invalid():
    fb = Feedback(verdict=Verdict.PASS, n_pass=2, n_fail=1)
    assert "Pass requires n_fail == 0" in validate_feedback(fb)


def test_candidate_of_generated_tokens_may_have_empty_eos_span():
    candidate = CandidateProgram(
        source="print",
        tokens=("print", "<eof>"),
        token_char_spans=((0, 5), (5, 5)),
        logprobs=(-1.0, -2.0),
    )
    assert validate_candidate(candidate) == []
