"""Docstring compression for code-generation prompts."""

from .backend import (
    BackendError,
    BigramToy,
    ConstantLogitsToy,
    LengthSensitiveToy,
    RemoteBackend,
    ScoringBackend,
    SerializedBackend,
    UniformToy,
    cosine_similarity,
    token_logprobs,
)
from .compressor import (
    CompressionError,
    SearchSpace,
    build_search_space,
    constraint_check,
    random_compress,
    selfinfo_compress,
    shortendoc_compress,
)
from .core import (
    Candidate,
    CompressionConfig,
    CompressionResult,
    Prompt,
    RemovalStep,
    TokenSeq,
    compression_ratio,
    remove_positions,
)
from .evalkit import (
    BatchReport,
    DatasetRecord,
    flops_estimate,
    load_dataset,
    run_batch,
    split_prompt,
)
from .importance import loo_importance, rank_ascending, self_information, sequence_nll
from .preprocess import normalize_whitespace, remove_stop_words, strip_instructions

__version__ = "0.1.0"
