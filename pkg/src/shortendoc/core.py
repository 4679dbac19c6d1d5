"""Domain types shared across the package, plus the ratio metric and
subsequence helpers."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

DEFAULT_STOP_WORDS: tuple[str, ...] = (
    "the", "The", "a", "A", "an", "that", "and", "are", "is", "of", "to",
    "which", "where", "there", "then", "this", "This", "any", "you", "You",
)

STRATEGIES = ("accept-first", "best-of-round")
REFERENCE_MODES = ("fixed", "current")

_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class Prompt:
    task_id: str
    signature: str
    docstring: str
    language_tag: str = "python"

    def __post_init__(self) -> None:
        if not self.signature:
            raise ValueError("signature must be non-empty")


@dataclass(frozen=True)
class TokenSeq:
    """Token ids paired with the surface text each id was produced from.

    Concatenating ``surfaces`` reproduces the tokenized text.
    """

    ids: tuple[int, ...] = ()
    surfaces: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        if len(self.ids) != len(self.surfaces):
            raise ValueError(
                f"ids/surfaces length mismatch: {len(self.ids)} != {len(self.surfaces)}"
            )

    def __len__(self) -> int:
        return len(self.ids)

    def __add__(self, other: "TokenSeq") -> "TokenSeq":
        return TokenSeq(self.ids + other.ids, self.surfaces + other.surfaces)

    def text(self) -> str:
        return "".join(self.surfaces)


@dataclass(frozen=True)
class Candidate:
    """A set of document positions removed together.

    ``positions`` keeps the importance order it was built in; removal
    treats it as a set.
    """

    positions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if len(set(self.positions)) != len(self.positions):
            raise ValueError("invalid candidate: duplicate positions")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class CompressionConfig:
    tau: float = 0.999
    top_n: int = 10
    stop_words: tuple[str, ...] = DEFAULT_STOP_WORDS
    stopword_sim_threshold: float = 0.999
    strip_instructions: tuple[str, ...] = ()
    log_base: str = "natural"
    max_steps: int | None = None
    strategy: str = "accept-first"
    reference: str = "fixed"
    condition_on_signature: bool = False
    remove_stop_words: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "stop_words", tuple(self.stop_words))
        object.__setattr__(self, "strip_instructions", tuple(self.strip_instructions))
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 < self.stopword_sim_threshold <= 1.0:
            raise ValueError(
                f"stopword_sim_threshold must lie in (0, 1], got {self.stopword_sim_threshold}"
            )
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1 or None, got {self.max_steps}")
        if self.log_base != "natural":
            raise ValueError(f"unsupported log_base {self.log_base!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.reference not in REFERENCE_MODES:
            raise ValueError(f"reference must be one of {REFERENCE_MODES}, got {self.reference!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CompressionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class RemovalStep:
    candidate: Candidate
    removed_surfaces: tuple[str, ...]
    similarity_at_acceptance: float
    tokens_before: int
    tokens_after: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "removed_surfaces", tuple(self.removed_surfaces))
        if self.tokens_after != self.tokens_before - len(self.candidate):
            raise ValueError("tokens_after must equal tokens_before minus candidate size")

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate_positions": list(self.candidate.positions),
            "removed_surfaces": list(self.removed_surfaces),
            "similarity": self.similarity_at_acceptance,
            "tokens_before": self.tokens_before,
            "tokens_after": self.tokens_after,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RemovalStep":
        return cls(
            candidate=Candidate(tuple(data["candidate_positions"])),
            removed_surfaces=tuple(data["removed_surfaces"]),
            similarity_at_acceptance=float(data["similarity"]),
            tokens_before=int(data["tokens_before"]),
            tokens_after=int(data["tokens_after"]),
        )


@dataclass(frozen=True)
class CompressionResult:
    original_docstring: str
    preprocessed_docstring: str
    compressed_docstring: str
    ratio: float
    final_similarity: float | None = None
    trace: tuple[RemovalStep, ...] = ()
    task_id: str = ""
    original_token_count: int | None = None
    compressed_token_count: int | None = None
    # Not serialized: the token sequences the trace indexes into.
    preprocessed_tokens: TokenSeq | None = field(default=None, compare=False, repr=False)
    compressed_tokens: TokenSeq | None = field(default=None, compare=False, repr=False)
    note: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "trace", tuple(self.trace))
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "original_docstring": self.original_docstring,
            "preprocessed_docstring": self.preprocessed_docstring,
            "compressed_docstring": self.compressed_docstring,
            "ratio": self.ratio,
            "final_similarity": self.final_similarity,
            "trace": [step.to_dict() for step in self.trace],
            "original_token_count": self.original_token_count,
            "compressed_token_count": self.compressed_token_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CompressionResult":
        sim = data.get("final_similarity")
        return cls(
            task_id=data.get("task_id", ""),
            original_docstring=data["original_docstring"],
            preprocessed_docstring=data["preprocessed_docstring"],
            compressed_docstring=data["compressed_docstring"],
            ratio=float(data["ratio"]),
            final_similarity=None if sim is None else float(sim),
            trace=tuple(RemovalStep.from_dict(s) for s in data.get("trace", [])),
            original_token_count=data.get("original_token_count"),
            compressed_token_count=data.get("compressed_token_count"),
        )


def compression_ratio(original_len: int, compressed_len: int) -> float:
    """Fraction of tokens removed: ``1 - compressed_len / original_len``."""
    if original_len <= 0:
        raise ValueError("empty original")
    if compressed_len < 0:
        raise ValueError("negative compressed length")
    if compressed_len > original_len:
        raise ValueError("not a compression")
    return 1.0 - compressed_len / original_len


def remove_positions(seq: TokenSeq, cand: Candidate | Sequence[int]) -> TokenSeq:
    positions = cand.positions if isinstance(cand, Candidate) else tuple(cand)
    n = len(seq)
    drop = set()
    for p in positions:
        if not 0 <= p < n:
            raise IndexError(f"invalid candidate: position {p} outside [0, {n})")
        if p in drop:
            raise ValueError("invalid candidate: duplicate positions")
        drop.add(p)
    keep = [i for i in range(n) if i not in drop]
    return TokenSeq(
        tuple(seq.ids[i] for i in keep),
        tuple(seq.surfaces[i] for i in keep),
    )


def collapse_whitespace(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def join_surfaces(seq: TokenSeq) -> str:
    """Text of a (possibly compressed) sequence: surfaces concatenated
    verbatim, then one whitespace-collapse pass."""
    return collapse_whitespace(seq.text())


def is_subsequence(sub: Sequence[Any], full: Sequence[Any]) -> bool:
    it = iter(full)
    return all(any(x == y for y in it) for x in sub)


def safe_ratio(original_len: int, compressed_len: int) -> float:
    """compression_ratio with the degenerate cases folded to 0 or clamped."""
    if original_len <= 0:
        return 0.0
    return compression_ratio(original_len, min(compressed_len, original_len))


def replay_trace(start: TokenSeq, trace: Sequence[RemovalStep]) -> TokenSeq:
    seq = start
    for step in trace:
        if len(seq) != step.tokens_before:
            raise ValueError(
                f"trace length mismatch: have {len(seq)} tokens, step expects {step.tokens_before}"
            )
        seq = remove_positions(seq, step.candidate)
    return seq
