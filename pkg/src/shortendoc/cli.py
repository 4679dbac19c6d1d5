"""Command-line entry point: ``shortendoc compress|batch|report``.

Exit codes: 0 success, 1 usage error, 2 backend failure, 3 malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .backend import (
    BackendError,
    BigramToy,
    ConstantLogitsToy,
    LengthSensitiveToy,
    RemoteBackend,
    ScoringBackend,
    UniformToy,
)
from .compressor import CompressionError, shortendoc_compress
from .core import STRATEGIES, CompressionConfig, Prompt
from .evalkit import (
    DEFAULT_BASELINE_RATIO,
    DatasetError,
    PromptFormatError,
    load_dataset,
    mbpp_test_slice,
    read_results,
    report_from_results,
    run_to_files,
    split_prompt,
)
from .preprocess import MBPP_INSTRUCTIONS

logger = logging.getLogger("shortendoc")

EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_INPUT = 3
ENV_BACKEND = "SHORTENDOC_BACKEND_URL"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_backend(spec: str | None) -> ScoringBackend:
    """Build a backend from ``toy:uniform:V``, ``toy:bigram:PATH``,
    ``toy:constant``, ``toy:sensitive``, ``http:URL`` or a bare URL."""
    if not spec:
        spec = os.environ.get(ENV_BACKEND)
    if not spec:
        raise UsageError(f"no backend given (use --backend or set {ENV_BACKEND})")
    if spec.startswith(("http://", "https://")):
        return RemoteBackend(spec)
    kind, _, rest = spec.partition(":")
    if kind == "http":
        url = rest if rest.startswith(("http://", "https://")) else "http:" + rest
        return RemoteBackend(url)
    if kind != "toy":
        raise UsageError(f"unknown backend {spec!r}")
    name, _, arg = rest.partition(":")
    if name == "uniform":
        try:
            return UniformToy(int(arg) if arg else 16)
        except ValueError as exc:
            raise UsageError(f"bad vocabulary size in {spec!r}") from exc
    if name == "bigram":
        if not arg:
            raise UsageError("toy:bigram needs a table path")
        try:
            return BigramToy.from_json(arg)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load bigram table {arg!r}: {exc}") from exc
    if name == "constant":
        return ConstantLogitsToy()
    if name == "sensitive":
        return LengthSensitiveToy()
    raise UsageError(f"unknown toy backend {name!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", help="toy:uniform:V | toy:bigram:PATH | toy:constant | "
                   "toy:sensitive | http:URL (default: $%s)" % ENV_BACKEND)
    p.add_argument("--config", help="JSON file with compression settings")
    p.add_argument("--tau", type=float, default=None, help="logit similarity threshold (0.999)")
    p.add_argument("--top-n", type=int, default=None, help="least-important tokens searched (10)")
    p.add_argument("--strategy", choices=STRATEGIES, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--reference", choices=("fixed", "current"), default=None)
    p.add_argument("--condition-on-signature", action="store_true", default=None)
    p.add_argument("--no-stop-words", action="store_true",
                   help="skip the stop-word preprocessing pass")
    p.add_argument("-v", "--verbose", action="store_true")


def build_config(args, strip_default=()) -> CompressionConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
    data.setdefault("strip_instructions", list(strip_default))
    for flag, key in (("tau", "tau"), ("top_n", "top_n"), ("strategy", "strategy"),
                      ("max_steps", "max_steps"), ("reference", "reference"),
                      ("condition_on_signature", "condition_on_signature")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.no_stop_words:
        data["remove_stop_words"] = False
    try:
        return CompressionConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_compress(args) -> int:
    if args.prompt_file:
        try:
            with open(args.prompt_file, encoding="utf-8") as fh:
                raw = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.prompt_file!r}: {exc}") from exc
        try:
            sig, doc = split_prompt(raw, "humaneval_like", entry_point=args.entry_point)
        except PromptFormatError as exc:
            print(f"malformed prompt: {exc}", file=sys.stderr)
            return EXIT_INPUT
    elif args.docstring is not None:
        sig, doc = args.signature or "", args.docstring
        if not sig:
            raise UsageError("--signature is required with --docstring")
    else:
        raise UsageError("one of --docstring or --prompt-file is required")
    cfg = build_config(args)
    backend = make_backend(args.backend)
    result = shortendoc_compress(Prompt(args.task_id, sig, doc), backend, cfg)
    if args.json:
        print(result.to_json())
    else:
        print(result.compressed_docstring)
        logger.info("ratio=%.4f similarity=%s steps=%d", result.ratio,
                    result.final_similarity, len(result.trace))
    return 0


def cmd_batch(args) -> int:
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    fmt = "mbpp_like" if args.format == "mbpp" else "humaneval_like"
    strip = MBPP_INSTRUCTIONS if fmt == "mbpp_like" else ()
    cfg = build_config(args, strip_default=strip)
    try:
        records = load_dataset(args.input, fmt)
    except DatasetError as exc:
        print(f"malformed dataset: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.mbpp_test_slice:
        records = mbpp_test_slice(records)
    backend = make_backend(args.backend)
    ratio = args.match_ratio if args.match_ratio is not None else DEFAULT_BASELINE_RATIO
    if not 0.0 <= ratio <= 1.0:
        raise UsageError("--match-ratio must lie in [0, 1]")
    dataset = os.path.basename(args.input).split(".")[0]
    report = run_to_files(records, backend, args.method, args.out, cfg=cfg, ratio=ratio,
                          seed=args.seed, concurrency=args.concurrency, resume=args.resume,
                          dataset=dataset, model_params=args.model_params)
    summary = report.summary()
    logger.info("%s on %s: n=%d mean_ratio=%.4f failures=%d", args.method, dataset,
                summary["n"], summary["mean_ratio"], summary["failures"])
    return 0


def format_report(results, model_params: float | None) -> str:
    if not results:
        return "0 records"
    report = report_from_results(results, model_params=model_params or 1.0)
    s = report.summary()
    lines = [
        f"{'records':<28}{s['n']:>16d}",
        f"{'mean ratio':<28}{s['mean_ratio']:>16.4f}",
        f"{'median ratio':<28}{s['median_ratio']:>16.4f}",
        f"{'raw docstring tokens':<28}{report.raw_tokens:>16d}",
        f"{'compressed docstring tokens':<28}{report.compressed_tokens:>16d}",
    ]
    if model_params:
        saved = s["flops_raw_estimate"] - s["flops_compressed_estimate"]
        lines += [
            f"{'FLOPs raw (estimate)':<28}{s['flops_raw_estimate']:>16.4e}",
            f"{'FLOPs compressed (estimate)':<28}{s['flops_compressed_estimate']:>16.4e}",
            f"{'FLOPs saved (estimate)':<28}{saved:>16.4e}",
        ]
    return "\n".join(lines)


def cmd_report(args) -> int:
    if not os.path.exists(args.results):
        raise UsageError(f"results file not found: {args.results}")
    try:
        results = read_results(args.results)
    except DatasetError as exc:
        print(f"malformed results: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.model_params is not None and args.model_params <= 0:
        raise UsageError("--model-params must be positive")
    print(format_report(results, args.model_params))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shortendoc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="compress one docstring")
    p.add_argument("--signature")
    p.add_argument("--docstring")
    p.add_argument("--prompt-file", help="file holding a function header and docstring")
    p.add_argument("--entry-point", help="function to take from --prompt-file")
    p.add_argument("--task-id", default="cli")
    p.add_argument("--json", action="store_true", help="print the full result as JSON")
    _add_common(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("batch", help="compress every record of a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("humaneval", "mbpp"), required=True)
    p.add_argument("--method", choices=("shortendoc", "random", "selfinfo"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--match-ratio", type=float, default=None,
                   help=f"removal ratio for baselines (default {DEFAULT_BASELINE_RATIO})")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--mbpp-test-slice", action="store_true",
                   help="keep only MBPP task ids 11-510")
    p.add_argument("--model-params", type=float, default=1.3e9)
    _add_common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", help="summarize a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--model-params", type=float, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"shortendoc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CompressionError, BackendError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
