import numpy as np
import pytest

from shortendoc.backend import BigramToy

WORDS = ["return", "the", "sum", "of", "a", "list", "sorted", "values", "if", "empty", "zero"]

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def hand_toy():
    """Three-word bigram model with a hand-written table.

    P(b|a) = 0.5, P(b|b) = 0.25, start = (a: .5, b: .25, c: .25).
    """
    start = {"a": 0.5, "b": 0.25, "c": 0.25}
    trans = {
        ("a", "a"): 0.25, ("a", "b"): 0.5, ("a", "c"): 0.25,
        ("b", "a"): 0.5, ("b", "b"): 0.25, ("b", "c"): 0.25,
        ("c", "a"): 0.125, ("c", "b"): 0.125, ("c", "c"): 0.75,
    }
    return BigramToy(["a", "b", "c"], start, trans, unk=None)


def random_toy(seed: int) -> BigramToy:
    return BigramToy.random(WORDS, seed=seed, concentration=0.7)


def random_doc(rng: np.random.Generator, low: int = 2, high: int = 12) -> str:
    n = int(rng.integers(low, high + 1))
    return " ".join(rng.choice(WORDS, size=n))
