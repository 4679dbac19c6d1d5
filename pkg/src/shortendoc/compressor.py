"""Iterative docstring compression under a next-token logit constraint,
plus the random and self-information baselines.

Each round ranks the current tokens by leave-one-out importance, takes
the ``top_n`` least important, and tries removing consecutive runs of
that ranking (longest runs first). A removal is accepted when the
cosine similarity between the next-token logits after
``signature + reference`` and after ``signature + trial`` stays at or
above ``tau``. The loop ends when a full scan accepts nothing.
"""

from __future__ import annotations

import contextlib
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np

from .backend import ScoringBackend, cosine_similarity
from .core import (
    Candidate,
    CompressionConfig,
    CompressionResult,
    Prompt,
    RemovalStep,
    TokenSeq,
    join_surfaces,
    remove_positions,
    replay_trace,
    safe_ratio,
)
from .importance import loo_importance, rank_ascending, self_information
from .preprocess import normalize_whitespace, preprocess, strip_instructions

logger = logging.getLogger(__name__)


class CompressionError(RuntimeError):
    """A compression run failed; ``stage`` names the pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except CompressionError:
        raise
    except Exception as exc:
        raise CompressionError(name, exc) from exc


@dataclass(frozen=True)
class SearchSpace:
    candidates: tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def by_k(self) -> dict[int, list[Candidate]]:
        groups: dict[int, list[Candidate]] = {}
        for c in self.candidates:
            groups.setdefault(len(c), []).append(c)
        return groups


def build_search_space(sorted_positions, n: int) -> SearchSpace:
    """All consecutive runs, of every length ``1..N``, over the first
    ``N = min(n, len(sorted_positions))`` entries. Grouped by run length,
    then by start offset."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sorted_positions = list(sorted_positions)
    if not sorted_positions:
        raise ValueError("nothing to compress")
    top = sorted_positions[:n]
    size = len(top)
    cands = [
        Candidate(tuple(top[j:j + k]))
        for k in range(1, size + 1)
        for j in range(size - k + 1)
    ]
    return SearchSpace(tuple(cands))


def constraint_check(backend: ScoringBackend, signature_tokens: TokenSeq,
                     reference_doc: TokenSeq, trial_doc: TokenSeq,
                     tau: float) -> tuple[bool, float]:
    ref = backend.next_token_logits(signature_tokens + reference_doc)
    trial = backend.next_token_logits(signature_tokens + trial_doc)
    sim = cosine_similarity(ref, trial)
    return sim >= tau, sim


def _scan_order(space: SearchSpace, importance: list[float]) -> list[Candidate]:
    keyed = [
        (-len(c), sum(importance[p] for p in c.positions), idx, c)
        for idx, c in enumerate(space.candidates)
    ]
    keyed.sort(key=lambda t: t[:3])
    return [t[3] for t in keyed]


def _similarity(backend: ScoringBackend, ref_logits: np.ndarray,
                sig: TokenSeq, doc: TokenSeq) -> float:
    return cosine_similarity(ref_logits, backend.next_token_logits(sig + doc))


def _raw_length(backend: ScoringBackend, docstring: str) -> int:
    with _stage("tokenize"):
        return len(backend.tokenize(docstring))


def shortendoc_compress(prompt: Prompt, backend: ScoringBackend,
                        cfg: CompressionConfig | None = None,
                        executor: Executor | None = None) -> CompressionResult:
    """Compress ``prompt.docstring`` as far as the logit constraint allows.

    ``executor``, when given, fans out the importance passes and the
    candidate checks of a round; acceptance is still resolved in scan
    order, so results do not depend on it.
    """
    cfg = cfg or CompressionConfig()
    raw_len = _raw_length(backend, prompt.docstring)
    with _stage("preprocess"):
        pre = preprocess(prompt.docstring, backend, cfg)
    with _stage("tokenize"):
        doc = backend.tokenize(pre)
        sig = backend.tokenize(prompt.signature)

    def result(current: TokenSeq, trace, final_sim, note=None) -> CompressionResult:
        return CompressionResult(
            task_id=prompt.task_id,
            original_docstring=prompt.docstring,
            preprocessed_docstring=pre,
            compressed_docstring=join_surfaces(current),
            ratio=safe_ratio(raw_len, len(current)),
            original_token_count=raw_len,
            compressed_token_count=len(current),
            final_similarity=final_sim,
            trace=tuple(trace),
            preprocessed_tokens=doc,
            compressed_tokens=current,
            note=note,
        )

    if len(doc) < 2:
        return result(doc, (), None, note=f"skipped: {len(doc)} token(s) after preprocessing")

    context = sig if cfg.condition_on_signature else None
    with _stage("constraint"):
        fixed_ref = backend.next_token_logits(sig + doc)

    current = doc
    trace: list[RemovalStep] = []
    while len(current) > 0 and (cfg.max_steps is None or len(trace) < cfg.max_steps):
        with _stage("importance"):
            imp = loo_importance(backend, current, context=context, executor=executor)
        space = build_search_space(rank_ascending(imp), cfg.top_n)
        order = _scan_order(space, imp)
        with _stage("constraint"):
            if cfg.reference == "current":
                ref = backend.next_token_logits(sig + current)
            else:
                ref = fixed_ref
            chosen = _choose(backend, ref, sig, current, order, cfg, executor)
        if chosen is None:
            break
        cand, sim = chosen
        after = remove_positions(current, cand)
        trace.append(RemovalStep(
            candidate=cand,
            removed_surfaces=tuple(current.surfaces[p] for p in cand.positions),
            similarity_at_acceptance=sim,
            tokens_before=len(current),
            tokens_after=len(after),
        ))
        logger.debug("%s: removed %s (sim=%.6f), %d tokens left",
                     prompt.task_id, cand.positions, sim, len(after))
        current = after

    if not trace:
        return result(current, trace, None)
    with _stage("verify"):
        final = _similarity(backend, fixed_ref, sig, current)
        # Only reachable with reference="current" or a nondeterministic backend.
        while trace and final < cfg.tau:
            trace.pop()
            current = replay_trace(doc, trace)
            final = _similarity(backend, fixed_ref, sig, current)
    return result(current, trace, final if trace else None)


def _choose(backend, ref, sig, current, order, cfg, executor):
    def check(cand: Candidate) -> float:
        return _similarity(backend, ref, sig, remove_positions(current, cand))

    if cfg.strategy == "accept-first":
        if executor is None:
            for cand in order:
                sim = check(cand)
                if sim >= cfg.tau:
                    return cand, sim
            return None
        for cand, sim in zip(order, executor.map(check, order)):
            if sim >= cfg.tau:
                return cand, sim
        return None

    sims = list(executor.map(check, order)) if executor else [check(c) for c in order]
    best = None
    for rank, (cand, sim) in enumerate(zip(order, sims)):
        if sim < cfg.tau:
            continue
        key = (len(cand), sim, -rank)
        if best is None or key > best[0]:
            best = (key, cand, sim)
    return None if best is None else (best[1], best[2])


def _baseline_input(prompt: Prompt, backend: ScoringBackend,
                    cfg: CompressionConfig | None) -> tuple[int, str, TokenSeq]:
    raw_len = _raw_length(backend, prompt.docstring)
    pre = normalize_whitespace(prompt.docstring)
    if cfg is not None:
        pre = strip_instructions(pre, cfg.strip_instructions)
    with _stage("tokenize"):
        doc = backend.tokenize(pre)
    return raw_len, pre, doc


def _n_remove(ratio: float, length: int) -> int:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
    # Guard against 0.29 * 100 == 28.999999999999996.
    return min(length, math.floor(ratio * length + 1e-9))


def _one_shot(prompt: Prompt, backend: ScoringBackend, raw_len: int, pre: str,
              doc: TokenSeq, drop: list[int]) -> CompressionResult:
    trace: tuple[RemovalStep, ...] = ()
    final = None
    out = doc
    if drop:
        cand = Candidate(tuple(drop))
        out = remove_positions(doc, cand)
        with _stage("constraint"):
            sig = backend.tokenize(prompt.signature)
            final = _similarity(backend, backend.next_token_logits(sig + doc), sig, out)
        # Ungated: the similarity is recorded for reference only.
        trace = (RemovalStep(cand, tuple(doc.surfaces[p] for p in drop), final,
                             len(doc), len(out)),)
    return CompressionResult(
        task_id=prompt.task_id,
        original_docstring=prompt.docstring,
        preprocessed_docstring=pre,
        compressed_docstring=join_surfaces(out),
        ratio=safe_ratio(raw_len, len(out)),
        original_token_count=raw_len,
        compressed_token_count=len(out),
        final_similarity=final,
        trace=trace,
        preprocessed_tokens=doc,
        compressed_tokens=out,
    )


def random_compress(prompt: Prompt, backend: ScoringBackend, ratio: float,
                    seed: int, cfg: CompressionConfig | None = None) -> CompressionResult:
    """Drop ``floor(ratio * L)`` positions chosen uniformly at random."""
    raw_len, pre, doc = _baseline_input(prompt, backend, cfg)
    m = _n_remove(ratio, len(doc))
    rng = np.random.default_rng(seed)
    drop = sorted(int(p) for p in rng.choice(len(doc), size=m, replace=False)) if m else []
    return _one_shot(prompt, backend, raw_len, pre, doc, drop)


def selfinfo_compress(prompt: Prompt, backend: ScoringBackend, ratio: float,
                      cfg: CompressionConfig | None = None) -> CompressionResult:
    """Drop the ``floor(ratio * L)`` tokens with the lowest self-information
    (earliest first on ties), in one shot and without a constraint."""
    raw_len, pre, doc = _baseline_input(prompt, backend, cfg)
    m = _n_remove(ratio, len(doc))
    drop: list[int] = []
    if m:
        with _stage("importance"):
            info = self_information(backend, doc)
        drop = sorted(rank_ascending(info)[:m])
    return _one_shot(prompt, backend, raw_len, pre, doc, drop)
