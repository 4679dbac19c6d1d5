"""Docstring preprocessing: whitespace normalization, optional stripping of
boilerplate instructions, and similarity-gated stop-word removal."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .backend import BackendError, ScoringBackend, cosine_similarity
from .core import CompressionConfig

_BREAKING_WS = re.compile(r"\s*[\n\t\r\v\f]\s*")
_WORD = re.compile(r"(\s*)(\S+)")

MBPP_INSTRUCTIONS: tuple[str, ...] = (
    "write a python function to",
    "write a function to",
)


@dataclass(frozen=True)
class StopWordDecision:
    word_index: int
    word: str
    similarity: float | None
    removed: bool


def normalize_whitespace(doc: str) -> str:
    """Replace every whitespace run containing a line break or tab by a
    single space and trim the ends."""
    return _BREAKING_WS.sub(" ", doc).strip()


def strip_instructions(doc: str, patterns: Sequence[str]) -> str:
    if not doc or not patterns:
        return doc
    lowered = doc.lower()
    for pat in patterns:
        if pat and lowered.startswith(pat.lower()):
            return doc[len(pat):].strip()
    return doc


def _split_words(doc: str) -> list[tuple[str, str]]:
    """(leading separator, word) pairs; concatenation gives back ``doc``
    up to trailing whitespace."""
    return _WORD.findall(doc)


def _join(words: list[tuple[str, str]]) -> str:
    if not words:
        return ""
    first = words[0][1]
    return first + "".join(sep + w for sep, w in words[1:])


def remove_stop_words_traced(
    doc: str, backend: ScoringBackend, cfg: CompressionConfig
) -> tuple[str, list[StopWordDecision]]:
    """Stop-word removal that also returns one decision per stop-word
    occurrence, in scan order."""
    stops = set(cfg.stop_words)
    words = _split_words(doc)
    if not stops or not any(w in stops for _, w in words):
        return doc, []
    reference = backend.doc_embedding(backend.tokenize(doc))

    kept = [True] * len(words)
    decisions: list[StopWordDecision] = []
    for i, (_, word) in enumerate(words):
        if word not in stops:
            continue
        kept[i] = False
        trial = _join([p for p, k in zip(words, kept) if k])
        try:
            vec = backend.doc_embedding(backend.tokenize(trial))
        except Exception as exc:
            raise BackendError("embed", f"word {i} ({word!r}): {exc}") from exc
        try:
            sim = cosine_similarity(reference, vec)
        except ValueError:
            # An all-stop-word docstring can reduce to nothing; keep the word.
            sim = None
        removed = sim is not None and sim >= cfg.stopword_sim_threshold
        kept[i] = not removed
        decisions.append(StopWordDecision(i, word, sim, removed))
    if all(kept):
        return doc, decisions
    return _join([p for p, k in zip(words, kept) if k]), decisions


def remove_stop_words(doc: str, backend: ScoringBackend, cfg: CompressionConfig) -> str:
    return remove_stop_words_traced(doc, backend, cfg)[0]


def preprocess(doc: str, backend: ScoringBackend, cfg: CompressionConfig) -> str:
    """Full preprocessing pipeline applied before token-level compression."""
    out = normalize_whitespace(doc)
    out = strip_instructions(out, cfg.strip_instructions)
    if cfg.remove_stop_words:
        out = remove_stop_words(out, backend, cfg)
    return out
