import json
from pathlib import Path

import pytest

from execrl.model import Comparison, Problem, TestCase

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def classifier_fixtures() -> list[dict]:
    with open(FIXTURES / "classifier_fixtures.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def echo_problem() -> Problem:
    return Problem(
        id="echo",
        description="print the input line",
        tests=(
            TestCase(input="7", expected_output="7"),
            TestCase(input="hi", expected_output="hi"),
            TestCase(input="x y", expected_output="x y"),
        ),
        ground_truth="print(input())",
        max_tokens=12,
    )


@pytest.fixture
def exact_problem() -> Problem:
    return Problem(
        id="exact",
        description="byte-exact echo",
        tests=(
            TestCase(input="a", expected_output="a\n", comparison=Comparison.EXACT),
        ),
        max_tokens=12,
    )
