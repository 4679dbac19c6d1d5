"""Dataset ingestion, prompt splitting, batch compression and ratio/FLOPs
reporting."""

from __future__ import annotations

import gzip
import json
import logging
import os
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .backend import BackendError, ScoringBackend
from .compressor import CompressionError, random_compress, selfinfo_compress, shortendoc_compress
from .core import CompressionConfig, CompressionResult, Prompt

logger = logging.getLogger(__name__)

FORMATS = ("humaneval_like", "mbpp_like")
METHODS = ("shortendoc", "random", "selfinfo")
DEFAULT_MODEL_PARAMS = 1.3e9
DEFAULT_BASELINE_RATIO = 0.3

_FORMAT_ALIASES = {"humaneval": "humaneval_like", "mbpp": "mbpp_like"}
_TRIPLE = re.compile(r"[rRuUbB]{0,2}(\"\"\"|''')")


class DatasetError(ValueError):
    pass


class PromptFormatError(ValueError):
    pass


def normalize_format(tag: str) -> str:
    tag = _FORMAT_ALIASES.get(tag, tag)
    if tag not in FORMATS:
        raise ValueError(f"unknown format {tag!r}; expected one of {FORMATS}")
    return tag


@dataclass(frozen=True)
class DatasetRecord:
    task_id: str
    raw_prompt: str
    format_tag: str
    entry_point: str | None = None
    # Function header for MBPP-style records, taken from the reference code.
    header: str | None = None


def _find_header_end(raw: str, entry_point: str | None) -> int:
    """Index of the colon closing the target ``def`` header, or -1."""
    name = re.escape(entry_point) if entry_point else r"\w+"
    matches = list(re.finditer(rf"^[ \t]*(?:async[ \t]+)?def[ \t]+{name}[ \t]*\(", raw, re.M))
    if not matches:
        return -1
    i = matches[-1].end()
    depth = 1
    while i < len(raw) and depth:
        ch = raw[i]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        i += 1
    if depth:
        return -1
    m = re.compile(r"[^:\n]*:").match(raw, i)
    if m is None:
        return -1
    return m.end() - 1


def split_prompt(raw: str, format_tag: str, entry_point: str | None = None,
                 header: str | None = None) -> tuple[str, str]:
    """Split a raw prompt into ``(signature, docstring)``.

    For function-style prompts the signature runs through the colon of the
    target ``def`` header (preamble included) and the docstring is the body
    of the triple-quoted string that immediately follows it. Bare task
    descriptions get a signature from ``header`` or ``entry_point``.
    """
    format_tag = normalize_format(format_tag)
    if format_tag == "mbpp_like":
        if header:
            sig = header.strip()
        elif entry_point:
            sig = f"def {entry_point}():"
        else:
            raise PromptFormatError("no signature")
        return sig, raw.strip()

    end = _find_header_end(raw, entry_point)
    if end < 0:
        raise PromptFormatError("no signature")
    signature = raw[:end + 1].strip("\n")
    rest = raw[end + 1:]
    body = rest.lstrip()
    m = _TRIPLE.match(body)
    if m is None:
        return signature, ""
    quote = m.group(1)
    start = m.end()
    close = body.find(quote, start)
    if close < 0:
        raise PromptFormatError("malformed docstring")
    return signature, body[start:close]


def _open_text(path: str):
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


_MBPP_DEF = re.compile(r"^[ \t]*def[ \t]+(\w+)[ \t]*\(.*?\)[^:\n]*:", re.M | re.S)


def _mbpp_header(obj: dict) -> tuple[str | None, str | None]:
    code = obj.get("code") or ""
    tests = obj.get("test_list") or []
    called = None
    if tests:
        m = re.search(r"assert\s+(?:\w+\()*?\s*(\w+)\s*\(", tests[0])
        called = m.group(1) if m else None
    headers = {m.group(1): m.group(0).strip() for m in _MBPP_DEF.finditer(code)}
    if called and called in headers:
        return called, headers[called]
    if headers:
        name = next(reversed(headers))
        return name, headers[name]
    return called, None


def load_dataset(path: str, format_tag: str) -> list[DatasetRecord]:
    """Read a JSONL (optionally gzipped) dataset, one record per line."""
    format_tag = normalize_format(format_tag)
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "task_id" not in obj:
                raise DatasetError(f"{path}:{lineno}: missing task_id")
            task_id = str(obj["task_id"])
            if task_id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate task_id {task_id!r}")
            seen.add(task_id)
            if format_tag == "humaneval_like":
                if "prompt" not in obj:
                    raise DatasetError(f"{path}:{lineno}: missing prompt")
                records.append(DatasetRecord(task_id, obj["prompt"], format_tag,
                                             entry_point=obj.get("entry_point")))
            else:
                text = obj.get("text", obj.get("prompt"))
                if text is None:
                    raise DatasetError(f"{path}:{lineno}: missing text")
                entry, header = _mbpp_header(obj)
                records.append(DatasetRecord(task_id, text, format_tag,
                                             entry_point=entry, header=header))
    return records


def mbpp_test_slice(records: Sequence[DatasetRecord]) -> list[DatasetRecord]:
    """The conventional MBPP test split: task ids 11 through 510."""
    return [r for r in records if r.task_id.isdigit() and 11 <= int(r.task_id) <= 510]


def to_prompt(record: DatasetRecord) -> Prompt:
    sig, doc = split_prompt(record.raw_prompt, record.format_tag,
                            entry_point=record.entry_point, header=record.header)
    return Prompt(task_id=record.task_id, signature=sig, docstring=doc)


def flops_estimate(model_params: float, token_count: float) -> float:
    """Forward-pass estimate ``2 * params * tokens``."""
    if model_params <= 0 or token_count <= 0:
        raise ValueError("model_params and token_count must be positive")
    return 2.0 * model_params * token_count


def _total_flops(model_params: float, tokens: int) -> float:
    return flops_estimate(model_params, tokens) if tokens > 0 else 0.0


@dataclass
class BatchReport:
    method: str
    dataset: str
    results: list[CompressionResult] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    model_params: float = DEFAULT_MODEL_PARAMS

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.results]

    @property
    def mean_ratio(self) -> float:
        return statistics.fmean(self.ratios) if self.results else 0.0

    @property
    def median_ratio(self) -> float:
        return statistics.median(self.ratios) if self.results else 0.0

    @property
    def raw_tokens(self) -> int:
        return sum(r.original_token_count or 0 for r in self.results)

    @property
    def compressed_tokens(self) -> int:
        return sum(r.compressed_token_count or 0 for r in self.results)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "dataset": self.dataset,
            "n": len(self.results),
            "mean_ratio": self.mean_ratio,
            "median_ratio": self.median_ratio,
            "failures": len(self.failures),
            "flops_raw_estimate": _total_flops(self.model_params, self.raw_tokens),
            "flops_compressed_estimate": _total_flops(self.model_params, self.compressed_tokens),
        }


def compress_record(record: DatasetRecord, backend: ScoringBackend, method: str,
                    cfg: CompressionConfig, ratio: float = DEFAULT_BASELINE_RATIO,
                    seed: int = 0) -> CompressionResult:
    prompt = to_prompt(record)
    if method == "shortendoc":
        return shortendoc_compress(prompt, backend, cfg)
    if method == "random":
        return random_compress(prompt, backend, ratio, seed, cfg)
    if method == "selfinfo":
        return selfinfo_compress(prompt, backend, ratio, cfg)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def iter_batch(records: Sequence[DatasetRecord], backend: ScoringBackend, method: str,
               cfg: CompressionConfig, ratio: float = DEFAULT_BASELINE_RATIO,
               seed: int = 0, concurrency: int = 1
               ) -> Iterator[tuple[DatasetRecord, CompressionResult | None, str | None]]:
    """Yield ``(record, result, error)`` in record order. Per-record failures
    are yielded as errors; they never stop the batch."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

    def one(record: DatasetRecord):
        try:
            return record, compress_record(record, backend, method, cfg, ratio, seed), None
        except (CompressionError, BackendError, PromptFormatError, ValueError) as exc:
            logger.warning("%s failed: %s", record.task_id, exc)
            return record, None, str(exc)

    if concurrency <= 1:
        yield from map(one, records)
        return
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        yield from pool.map(one, records)


def run_batch(records: Sequence[DatasetRecord], backend: ScoringBackend, method: str,
              cfg: CompressionConfig | None = None, ratio: float = DEFAULT_BASELINE_RATIO,
              seed: int = 0, concurrency: int = 1, dataset: str = "",
              model_params: float = DEFAULT_MODEL_PARAMS) -> BatchReport:
    cfg = cfg or CompressionConfig()
    report = BatchReport(method=method, dataset=dataset, model_params=model_params)
    if records:
        backend.check()
    for record, result, error in iter_batch(records, backend, method, cfg, ratio, seed, concurrency):
        if error is None:
            report.results.append(result)
        else:
            report.failures.append((record.task_id, error))
    return report


def summary_path(results_path: str) -> str:
    base = results_path[:-6] if results_path.endswith(".jsonl") else results_path
    return base + ".summary.json"


def read_results(path: str) -> list[CompressionResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(CompressionResult.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed result ({exc})") from exc
    return out


def run_to_files(records: Sequence[DatasetRecord], backend: ScoringBackend, method: str,
                 out_path: str, cfg: CompressionConfig | None = None,
                 ratio: float = DEFAULT_BASELINE_RATIO, seed: int = 0,
                 concurrency: int = 1, resume: bool = False, dataset: str = "",
                 model_params: float = DEFAULT_MODEL_PARAMS) -> BatchReport:
    """Run a batch, streaming results to ``out_path`` (JSONL) in record order
    and writing the JSON summary next to it.

    With ``resume``, records whose task_id is already in ``out_path`` are
    skipped and the summary covers old and new results together.
    """
    cfg = cfg or CompressionConfig()
    report = BatchReport(method=method, dataset=dataset, model_params=model_params)
    done: set[str] = set()
    if resume and os.path.exists(out_path):
        report.results.extend(read_results(out_path))
        done = {r.task_id for r in report.results}
    todo = [r for r in records if r.task_id not in done]
    if todo:
        backend.check()
    with open(out_path, "a" if resume else "w", encoding="utf-8") as fh:
        for record, result, error in iter_batch(todo, backend, method, cfg, ratio, seed, concurrency):
            if error is None:
                report.results.append(result)
                fh.write(result.to_json() + "\n")
                fh.flush()
            else:
                report.failures.append((record.task_id, error))
    with open(summary_path(out_path), "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2)
        fh.write("\n")
    return report


def report_from_results(results: Iterable[CompressionResult], method: str = "",
                        dataset: str = "", model_params: float = DEFAULT_MODEL_PARAMS
                        ) -> BatchReport:
    return BatchReport(method=method, dataset=dataset, results=list(results),
                       model_params=model_params)
