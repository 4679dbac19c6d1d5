import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shortendoc.backend import (
    BackendError,
    BigramToy,
    ConstantLogitsToy,
    LengthSensitiveToy,
    SerializedBackend,
    UniformToy,
    cosine_similarity,
    split_pieces,
    token_logprobs,
)
from shortendoc.core import TokenSeq

from conftest import random_toy


def test_cosine_examples():
    v = np.array([0.3, -1.2, 4.0])
    assert cosine_similarity(v, v) == 1.0
    assert cosine_similarity(v, -v) == -1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0


def test_cosine_errors():
    with pytest.raises(ValueError, match="dimension"):
        cosine_similarity([1, 2], [1, 2, 3])
    with pytest.raises(ValueError, match="degenerate"):
        cosine_similarity([0, 0], [1, 2])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
def test_cosine_bounded(u, v):
    n = min(len(u), len(v))
    u, v = u[:n], v[:n]
    if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
        return
    assert -1.0 <= cosine_similarity(u, v) <= 1.0


def test_uniform_logprobs():
    toy = UniformToy(16)
    toks = toy.tokenize("one two three")
    assert token_logprobs(toy, toks) == [-math.log(16)] * 3


def test_bigram_logprobs_from_table(hand_toy):
    toks = hand_toy.tokenize("a b")
    assert token_logprobs(hand_toy, toks) == pytest.approx([math.log(0.5), math.log(0.5)], abs=1e-15)


def test_token_logprobs_rejects_empty():
    with pytest.raises(ValueError, match="empty sequence"):
        token_logprobs(UniformToy(), TokenSeq())


@pytest.mark.parametrize("seed", range(5))
def test_bigram_logprobs_match_table(seed):
    toy = random_toy(seed)
    toks = toy.tokenize("return the sum of sorted values unknownword")
    lps = token_logprobs(toy, toks)
    prev = None
    for t, lp in zip(toks.ids, lps):
        p = toy.start[t] if prev is None else toy.transitions[prev, t]
        assert abs(math.exp(lp) - p) <= 1e-12
        prev = t


@pytest.mark.parametrize("seed", range(5))
def test_bigram_logits_normalize(seed):
    toy = random_toy(seed)
    for text in ("", "return", "the sum of"):
        z = toy.next_token_logits(toy.tokenize(text))
        assert abs(np.exp(z).sum() - 1.0) <= 1e-9
        soft = np.exp(z - z.max())
        assert abs((soft / soft.sum()).sum() - 1.0) <= 1e-9


def test_bigram_rejects_bad_rows():
    with pytest.raises(ValueError, match="sum to 1"):
        BigramToy(["a"], {"a": 1.0}, [[0.7]], unk=None)
    with pytest.raises(ValueError):
        BigramToy(["a", "b"], {"a": 0.4, "b": 0.4}, {("a", "a"): 1.0, ("b", "b"): 1.0}, unk=None)


def test_bigram_unknown_words():
    toy = random_toy(0)
    toks = toy.tokenize("zebra")
    assert toks.ids == (toy.index["<unk>"],)
    strict = BigramToy(["a"], {"a": 1.0}, {("a", "a"): 1.0}, unk=None)
    with pytest.raises(ValueError, match="not in vocabulary"):
        strict.tokenize("zebra")


def test_bigram_from_json(tmp_path, hand_toy):
    path = tmp_path / "toy.json"
    path.write_text("""{"vocab": ["a", "b", "c"], "unk": null,
        "start": {"a": 0.5, "b": 0.25, "c": 0.25},
        "transitions": {"a": {"a": 0.25, "b": 0.5, "c": 0.25},
                        "b": {"a": 0.5, "b": 0.25, "c": 0.25},
                        "c": {"a": 0.125, "b": 0.125, "c": 0.75}}}""")
    toy = BigramToy.from_json(str(path))
    np.testing.assert_array_equal(toy.transitions, hand_toy.transitions)
    random_path = tmp_path / "random.json"
    random_path.write_text('{"vocab": ["x", "y"], "seed": 3}')
    assert BigramToy.from_json(str(random_path)).transitions.shape == (3, 3)


@given(st.text(alphabet=st.sampled_from(list("ab c\n\t.,'\"")), max_size=40))
def test_tokenizer_round_trip(text):
    assert "".join(split_pieces(text)) == text
    for toy in (UniformToy(), random_toy(0)):
        assert toy.detokenize(toy.tokenize(text)) == text


def test_determinism():
    toy = random_toy(4)
    toks = toy.tokenize("the sum of a list")
    np.testing.assert_array_equal(toy.next_token_logits(toks), toy.next_token_logits(toks))
    np.testing.assert_array_equal(toy.doc_embedding(toks), toy.doc_embedding(toks))
    again = random_toy(4)
    np.testing.assert_array_equal(toy.doc_embedding(toks), again.doc_embedding(toks))


def test_wrappers():
    base = random_toy(1)
    toks = base.tokenize("return the sum")
    const = ConstantLogitsToy(base)
    assert const.token_logprobs(toks) == base.token_logprobs(toks)
    np.testing.assert_array_equal(const.next_token_logits(toks), const.next_token_logits(TokenSeq()))
    sens = LengthSensitiveToy(base)
    a, b = sens.next_token_logits(toks), sens.next_token_logits(TokenSeq(toks.ids[:2], toks.surfaces[:2]))
    assert cosine_similarity(a, b) == 0.0
    ser = SerializedBackend(base)
    assert ser.tokenize("return") == base.tokenize("return")
    np.testing.assert_array_equal(ser.doc_embedding(toks), base.doc_embedding(toks))


def test_token_logprobs_validates_backend_output():
    class Broken(UniformToy):
        def token_logprobs(self, tokens):
            return [0.5] * len(tokens)

    class Short(UniformToy):
        def token_logprobs(self, tokens):
            return [-1.0]

    toks = UniformToy().tokenize("x y")
    with pytest.raises(BackendError):
        token_logprobs(Broken(), toks)
    with pytest.raises(BackendError):
        token_logprobs(Short(), toks)
