import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shortendoc.backend import UniformToy
from shortendoc.core import CompressionConfig
from shortendoc.preprocess import (
    MBPP_INSTRUCTIONS,
    normalize_whitespace,
    preprocess,
    remove_stop_words,
    remove_stop_words_traced,
    strip_instructions,
)
from shortendoc.backend import cosine_similarity

from conftest import random_toy


class NeverPasses(UniformToy):
    """Embedding is one-hot on token count, so any deletion is orthogonal."""

    def doc_embedding(self, tokens):
        out = np.zeros(256)
        out[len(tokens)] = 1.0
        return out


@pytest.mark.parametrize("raw, expected", [
    ("Adds two\n numbers\t and returns", "Adds two numbers and returns"),
    ("already clean", "already clean"),
    ("a\n\n\tb", "a b"),
    ("", ""),
    ("\n  lead and trail \t\n", "lead and trail"),
])
def test_normalize_whitespace(raw, expected):
    assert normalize_whitespace(raw) == expected


@given(st.text(alphabet=st.sampled_from(list("ab \n\t\r")), max_size=30))
def test_normalize_idempotent_and_clean(text):
    once = normalize_whitespace(text)
    assert normalize_whitespace(once) == once
    assert "\n" not in once and "\t" not in once


def test_strip_instructions():
    assert strip_instructions("Write a python function to find the max",
                              ["write a python function to"]) == "find the max"
    assert strip_instructions("Return the sum", ["write a function to"]) == "Return the sum"
    assert strip_instructions("", MBPP_INSTRUCTIONS) == ""
    assert strip_instructions("Write a function to x", []) == "Write a function to x"
    # Only the first matching pattern is removed, once.
    assert strip_instructions("write a function to write a function to x",
                              MBPP_INSTRUCTIONS) == "write a function to x"


def test_stop_words_gate_always_passing():
    cfg = CompressionConfig(stop_words=("a", "that", "the"))
    out = remove_stop_words("Write a function that returns the sum", UniformToy(), cfg)
    assert out == "Write function returns sum"


def test_stop_words_gate_never_passing():
    cfg = CompressionConfig(stop_words=("a", "that", "the"))
    doc = "Write a function that returns the sum"
    out, decisions = remove_stop_words_traced(doc, NeverPasses(), cfg)
    assert out == doc
    assert [d.word for d in decisions] == ["a", "that", "the"]
    assert not any(d.removed for d in decisions)


def test_stop_words_absent():
    cfg = CompressionConfig(stop_words=("the",))
    assert remove_stop_words("sum values", UniformToy(), cfg) == "sum values"


def test_stop_words_case_and_punctuation_sensitive():
    cfg = CompressionConfig(stop_words=("the",))
    assert remove_stop_words("The sum of the, the end", UniformToy(), cfg) == "The sum of the, end"


def test_all_stop_words_never_empties():
    class EmptyIsZero(UniformToy):
        def doc_embedding(self, tokens):
            return super().doc_embedding(tokens) * (len(tokens) > 0)

    cfg = CompressionConfig(stop_words=("the", "a"))
    out, decisions = remove_stop_words_traced("the a", EmptyIsZero(), cfg)
    assert out == "a"
    assert decisions[0].removed and decisions[1].similarity is None and not decisions[1].removed


@pytest.mark.parametrize("seed", range(8))
def test_gate_soundness_against_original(seed):
    toy = random_toy(seed)
    rng = np.random.default_rng(seed)
    doc = " ".join(rng.choice(["the", "a", "sum", "of", "list", "values"], size=12))
    cfg = CompressionConfig(stop_words=("the", "a", "of"), stopword_sim_threshold=0.95)
    out, decisions = remove_stop_words_traced(doc, toy, cfg)
    ref = toy.doc_embedding(toy.tokenize(doc))
    words = doc.split()
    kept = list(range(len(words)))
    for d in decisions:
        assert words[d.word_index] == d.word
        if d.removed:
            assert d.similarity >= cfg.stopword_sim_threshold
            kept.remove(d.word_index)
            trial = " ".join(words[i] for i in kept)
            assert cosine_similarity(ref, toy.doc_embedding(toy.tokenize(trial))) == pytest.approx(d.similarity)
    assert out == " ".join(words[i] for i in kept)
    # Output words form a subsequence of input words.
    it = iter(words)
    assert all(w in it for w in out.split())


def test_preprocess_pipeline():
    cfg = CompressionConfig(strip_instructions=MBPP_INSTRUCTIONS, stop_words=("the",))
    doc = "Write a function to\n\tfind the   max"
    assert preprocess(doc, UniformToy(), cfg) == "find   max"
    assert preprocess(doc, UniformToy(), CompressionConfig(remove_stop_words=False)) == \
        "Write a function to find the   max"
