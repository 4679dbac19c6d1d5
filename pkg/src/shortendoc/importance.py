"""Token importance from leave-one-out changes in average negative
log-likelihood.

Importance of token ``i`` is ``nll(D) - nll(D without i)``, where ``nll``
is the mean self-information of a sequence. Tokens with the lowest
importance are the cheapest to remove.
"""

from __future__ import annotations

from concurrent.futures import Executor
from typing import Sequence

from .backend import BackendError, ScoringBackend, token_logprobs
from .core import TokenSeq, remove_positions

ImportanceVector = list[float]


def self_information(backend: ScoringBackend, tokens: TokenSeq,
                     context: TokenSeq | None = None) -> list[float]:
    """``-log P(d_t | d_1..d_{t-1})`` per position (natural log).

    With ``context``, probabilities are conditioned on it as a prefix and
    only the entries for ``tokens`` are returned.
    """
    if len(tokens) == 0:
        raise ValueError("empty sequence")
    if context is None or len(context) == 0:
        lps = token_logprobs(backend, tokens)
    else:
        lps = token_logprobs(backend, context + tokens)[len(context):]
    return [max(0.0, -x) for x in lps]


def sequence_nll(backend: ScoringBackend, tokens: TokenSeq,
                 context: TokenSeq | None = None) -> float:
    """Mean self-information; 0.0 for an empty sequence."""
    if len(tokens) == 0:
        return 0.0
    info = self_information(backend, tokens, context)
    return sum(info) / len(info)


def loo_importance(backend: ScoringBackend, tokens: TokenSeq,
                   context: TokenSeq | None = None,
                   executor: Executor | None = None) -> ImportanceVector:
    """Leave-one-out importance for every position, using ``len(tokens) + 1``
    scoring passes. Passes run on ``executor`` when given."""
    if len(tokens) == 0:
        raise ValueError("empty sequence")

    def drop(i: int) -> float:
        try:
            return sequence_nll(backend, remove_positions(tokens, [i]), context)
        except BackendError as exc:
            raise BackendError(exc.endpoint, f"position {i}: {exc}") from exc

    full = sequence_nll(backend, tokens, context)
    positions = range(len(tokens))
    if executor is None:
        reduced = [drop(i) for i in positions]
    else:
        reduced = list(executor.map(drop, positions))
    return [full - r for r in reduced]


def rank_ascending(imp: Sequence[float]) -> list[int]:
    """Positions ordered by ascending importance, ties by position."""
    return sorted(range(len(imp)), key=lambda i: (imp[i], i))
