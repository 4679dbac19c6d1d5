"""Scoring backends: the capability contract the compressor relies on,
deterministic toy models for exact testing, and an HTTP client.

A backend tokenizes text, returns per-token natural-log probabilities,
next-token logits for a prefix, and a fixed-size document embedding.
"""

from __future__ import annotations

import abc
import json
import logging
import math
import re
import threading
import zlib
from typing import Mapping, Sequence

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .core import TokenSeq

logger = logging.getLogger(__name__)

_PIECE = re.compile(r"\s*\S+|\s+")
# log(p) for p == 0 would give -inf and break cosine similarity.
_PROB_FLOOR = 1e-300


class BackendError(RuntimeError):
    """Failure inside a scoring backend, tagged with the operation that failed."""

    def __init__(self, endpoint: str, message: str):
        super().__init__(f"{endpoint}: {message}")
        self.endpoint = endpoint


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0 or not (np.isfinite(nu) and np.isfinite(nv)):
        raise ValueError("degenerate vector")
    # Exact equality must give exactly 1.0 so that tau == 1.0 is satisfiable.
    if np.array_equal(u, v):
        return 1.0
    if np.array_equal(u, -v):
        return -1.0
    sim = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, sim))


class ScoringBackend(abc.ABC):
    """Capability contract shared by toy and remote backends."""

    @abc.abstractmethod
    def tokenize(self, text: str) -> TokenSeq: ...

    @abc.abstractmethod
    def detokenize(self, tokens: TokenSeq) -> str: ...

    @abc.abstractmethod
    def token_logprobs(self, tokens: TokenSeq) -> list[float]:
        """``log P(d_t | d_1..d_{t-1})`` for every position ``t``."""

    @abc.abstractmethod
    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray: ...

    @abc.abstractmethod
    def doc_embedding(self, tokens: TokenSeq) -> np.ndarray: ...

    def check(self) -> None:
        """Cheap reachability probe; raises BackendError on failure."""
        self.tokenize("ok")


def token_logprobs(backend: ScoringBackend, tokens: TokenSeq) -> list[float]:
    if len(tokens) == 0:
        raise ValueError("empty sequence")
    out = [float(x) for x in backend.token_logprobs(tokens)]
    if len(out) != len(tokens):
        raise BackendError(
            "logprobs", f"expected {len(tokens)} values, got {len(out)}"
        )
    if any(x > 1e-12 or math.isnan(x) for x in out):
        raise BackendError("logprobs", "log-probabilities must be <= 0")
    return out


def split_pieces(text: str) -> list[str]:
    """Split text into word pieces carrying their leading whitespace.

    ``"".join(split_pieces(x)) == x`` for every string.
    """
    return _PIECE.findall(text)


class _PieceTokenizer:
    """Whitespace-piece tokenizer shared by the toy backends."""

    def _piece_id(self, piece: str) -> int:
        raise NotImplementedError

    def tokenize(self, text: str) -> TokenSeq:
        pieces = split_pieces(text)
        return TokenSeq(tuple(self._piece_id(p) for p in pieces), tuple(pieces))

    def detokenize(self, tokens: TokenSeq) -> str:
        return "".join(tokens.surfaces)


class UniformToy(_PieceTokenizer, ScoringBackend):
    """Every token has probability ``1/V``; logits and embedding are constant."""

    def __init__(self, vocab_size: int = 16, logit_value: float = 1.0,
                 embedding: Sequence[float] = (1.0, 0.5, 0.25, 0.125)):
        if vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if logit_value == 0.0:
            raise ValueError("logit_value must be nonzero (zero vector has no direction)")
        self.vocab_size = vocab_size
        self.logit_value = float(logit_value)
        self.embedding = np.asarray(embedding, dtype=np.float64)

    def _piece_id(self, piece: str) -> int:
        return zlib.crc32(piece.strip().encode("utf-8")) % self.vocab_size

    def token_logprobs(self, tokens: TokenSeq) -> list[float]:
        return [-math.log(self.vocab_size)] * len(tokens)

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        return np.full(self.vocab_size, self.logit_value)

    def doc_embedding(self, tokens: TokenSeq) -> np.ndarray:
        return self.embedding.copy()


class BigramToy(_PieceTokenizer, ScoringBackend):
    """First-order Markov model over a small word vocabulary.

    Words outside the vocabulary map to ``unk`` (or are rejected when
    ``unk`` is None). Logits are the
    log-probabilities of the next-token distribution given the last
    token of the prefix (the start distribution for an empty prefix).
    The document embedding is the mean of fixed per-token vectors.
    """

    def __init__(self, vocab: Sequence[str], start, transitions,
                 embedding_dim: int = 8, seed: int = 0, unk: str | None = "<unk>"):
        vocab = list(vocab)
        if unk is not None and unk not in vocab:
            vocab.append(unk)
        self.vocab = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        if len(self.index) != len(vocab):
            raise ValueError("duplicate vocabulary entries")
        self.unk = unk
        v = len(vocab)
        self.start = self._as_vector(start, v)
        self.transitions = self._as_matrix(transitions, v)
        if abs(self.start.sum() - 1.0) > 1e-9:
            raise ValueError("start distribution must sum to 1")
        row_sums = self.transitions.sum(axis=1)
        bad = np.flatnonzero(np.abs(row_sums - 1.0) > 1e-9)
        if bad.size:
            raise ValueError(f"transition rows do not sum to 1: {[vocab[i] for i in bad]}")
        if (self.start < 0).any() or (self.transitions < 0).any():
            raise ValueError("probabilities must be non-negative")
        rng = np.random.default_rng(seed)
        self.token_vectors = rng.normal(size=(v, embedding_dim))
        self.seed = seed

    def _as_vector(self, start, v: int) -> np.ndarray:
        if isinstance(start, Mapping):
            out = np.zeros(v)
            for w, p in start.items():
                out[self.index[w]] = p
            return out
        out = np.asarray(start, dtype=np.float64)
        if out.shape != (v,):
            raise ValueError(f"start distribution must have shape ({v},)")
        return out

    def _as_matrix(self, transitions, v: int) -> np.ndarray:
        if isinstance(transitions, Mapping):
            out = np.zeros((v, v))
            for key, p in transitions.items():
                prev, nxt = key
                out[self.index[prev], self.index[nxt]] = p
            # Contexts with no outgoing entries fall back to uniform.
            empty = out.sum(axis=1) == 0
            out[empty] = 1.0 / v
            return out
        out = np.asarray(transitions, dtype=np.float64)
        if out.shape != (v, v):
            raise ValueError(f"transition matrix must have shape ({v}, {v})")
        return out

    @classmethod
    def random(cls, vocab: Sequence[str], seed: int = 0, concentration: float = 1.0,
               embedding_dim: int = 8) -> "BigramToy":
        """A toy with Dirichlet-sampled start and transition distributions."""
        vocab = list(vocab)
        if "<unk>" not in vocab:
            vocab.append("<unk>")
        rng = np.random.default_rng(seed)
        v = len(vocab)
        start = rng.dirichlet(np.full(v, concentration))
        trans = rng.dirichlet(np.full(v, concentration), size=v)
        return cls(vocab, start, trans, embedding_dim=embedding_dim, seed=seed)

    @classmethod
    def from_json(cls, path: str) -> "BigramToy":
        """Load ``{"vocab": [...], "start": {...}, "transitions": {prev: {next: p}}}``.

        If ``start``/``transitions`` are omitted, a random table is drawn
        from ``seed``.
        """
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
        vocab = spec["vocab"]
        seed = int(spec.get("seed", 0))
        dim = int(spec.get("embedding_dim", 8))
        if "transitions" not in spec:
            return cls.random(vocab, seed=seed, embedding_dim=dim,
                              concentration=float(spec.get("concentration", 1.0)))
        trans = {(prev, nxt): p
                 for prev, row in spec["transitions"].items()
                 for nxt, p in row.items()}
        return cls(vocab, spec["start"], trans, embedding_dim=dim, seed=seed,
                   unk=spec.get("unk", "<unk>"))

    def _piece_id(self, piece: str) -> int:
        word = piece.strip()
        if word in self.index:
            return self.index[word]
        if self.unk is None:
            raise ValueError(f"word {word!r} not in vocabulary")
        return self.index[self.unk]

    def prob(self, prev: int | None, nxt: int) -> float:
        if prev is None:
            return float(self.start[nxt])
        return float(self.transitions[prev, nxt])

    def token_logprobs(self, tokens: TokenSeq) -> list[float]:
        out = []
        prev = None
        for t in tokens.ids:
            out.append(math.log(max(self.prob(prev, t), _PROB_FLOOR)))
            prev = t
        return out

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        dist = self.start if len(prefix) == 0 else self.transitions[prefix.ids[-1]]
        return np.log(np.maximum(dist, _PROB_FLOOR))

    def doc_embedding(self, tokens: TokenSeq) -> np.ndarray:
        if len(tokens) == 0:
            return np.zeros(self.token_vectors.shape[1])
        return self.token_vectors[list(tokens.ids)].mean(axis=0)


class _Delegating(ScoringBackend):
    def __init__(self, base: ScoringBackend | None = None):
        self.base = base if base is not None else UniformToy()

    def tokenize(self, text: str) -> TokenSeq:
        return self.base.tokenize(text)

    def detokenize(self, tokens: TokenSeq) -> str:
        return self.base.detokenize(tokens)

    def token_logprobs(self, tokens: TokenSeq) -> list[float]:
        return self.base.token_logprobs(tokens)

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        return self.base.next_token_logits(prefix)

    def doc_embedding(self, tokens: TokenSeq) -> np.ndarray:
        return self.base.doc_embedding(tokens)


class ConstantLogitsToy(_Delegating):
    """Wraps a base backend but returns the same logits for every prefix,
    so any logit-similarity constraint always holds."""

    def __init__(self, base: ScoringBackend | None = None, dim: int = 16):
        super().__init__(base)
        self.logits = np.linspace(1.0, 2.0, dim)

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        return self.logits.copy()


class LengthSensitiveToy(_Delegating):
    """Logits are a one-hot vector indexed by prefix length, so removing
    any token from the prefix yields an orthogonal logit vector."""

    def __init__(self, base: ScoringBackend | None = None, dim: int = 4096):
        super().__init__(base)
        self.dim = dim

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        out = np.zeros(self.dim)
        out[len(prefix) % self.dim] = 1.0
        return out


class SerializedBackend(_Delegating):
    """Funnels every call through one lock, for backends that are not
    safe under concurrent use."""

    def __init__(self, base: ScoringBackend):
        super().__init__(base)
        self._lock = threading.Lock()

    def tokenize(self, text):
        with self._lock:
            return self.base.tokenize(text)

    def detokenize(self, tokens):
        with self._lock:
            return self.base.detokenize(tokens)

    def token_logprobs(self, tokens):
        with self._lock:
            return self.base.token_logprobs(tokens)

    def next_token_logits(self, prefix):
        with self._lock:
            return self.base.next_token_logits(prefix)

    def doc_embedding(self, tokens):
        with self._lock:
            return self.base.doc_embedding(tokens)


class RemoteBackend(ScoringBackend):
    """JSON-over-HTTP client for an inference server.

    Endpoints (all POST): ``/v1/tokenize``, ``/v1/detokenize``,
    ``/v1/logprobs``, ``/v1/logits``, ``/v1/embed``. Scoring calls send
    token ids, never text. Each thread gets its own HTTP session.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 3):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self._local = threading.local()

    def _session(self) -> requests.Session:
        sess = getattr(self._local, "session", None)
        if sess is None:
            sess = requests.Session()
            retry = Retry(total=self.retries, backoff_factor=0.2,
                          status_forcelist=(502, 503, 504),
                          allowed_methods=frozenset({"POST"}))
            adapter = HTTPAdapter(max_retries=retry)
            sess.mount("http://", adapter)
            sess.mount("https://", adapter)
            self._local.session = sess
        return sess

    def _post(self, endpoint: str, payload: dict, key: str):
        url = f"{self.base_url}/v1/{endpoint}"
        try:
            resp = self._session().post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(endpoint, f"request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(endpoint, f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendError(endpoint, "response is not JSON") from exc
        if not isinstance(body, dict) or key not in body:
            raise BackendError(endpoint, f"response missing {key!r}")
        return body

    @staticmethod
    def _numbers(endpoint: str, values) -> np.ndarray:
        if not isinstance(values, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in values
        ):
            raise BackendError(endpoint, "expected a list of numbers")
        return np.asarray(values, dtype=np.float64)

    def tokenize(self, text: str) -> TokenSeq:
        body = self._post("tokenize", {"text": text}, "ids")
        ids, surfaces = body.get("ids"), body.get("surfaces")
        if not isinstance(ids, list) or not isinstance(surfaces, list) or len(ids) != len(surfaces):
            raise BackendError("tokenize", "ids/surfaces missing or length-mismatched")
        if not all(isinstance(i, int) for i in ids) or not all(isinstance(s, str) for s in surfaces):
            raise BackendError("tokenize", "ids must be ints and surfaces strings")
        return TokenSeq(tuple(ids), tuple(surfaces))

    def detokenize(self, tokens: TokenSeq) -> str:
        body = self._post("detokenize", {"ids": list(tokens.ids)}, "text")
        if not isinstance(body["text"], str):
            raise BackendError("detokenize", "text must be a string")
        return body["text"]

    def token_logprobs(self, tokens: TokenSeq) -> list[float]:
        body = self._post("logprobs", {"ids": list(tokens.ids)}, "logprobs")
        out = self._numbers("logprobs", body["logprobs"])
        if out.shape[0] != len(tokens):
            raise BackendError("logprobs", f"expected {len(tokens)} values, got {out.shape[0]}")
        return out.tolist()

    def next_token_logits(self, prefix: TokenSeq) -> np.ndarray:
        body = self._post("logits", {"ids": list(prefix.ids)}, "logits")
        out = self._numbers("logits", body["logits"])
        if out.size == 0:
            raise BackendError("logits", "empty logit vector")
        return out

    def doc_embedding(self, tokens: TokenSeq) -> np.ndarray:
        body = self._post("embed", {"ids": list(tokens.ids)}, "vector")
        out = self._numbers("embed", body["vector"])
        if out.size == 0:
            raise BackendError("embed", "empty embedding")
        return out
