"""Command line wrapper: one export per invocation, report on stdout."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .exporter import POOLING_MODES, VALID_TARGETS, ExportError, ExportJob, export
from .records import DatasetFormatError

_ERRORS = (ExportError, DatasetFormatError, OSError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed dataset questions and passage spans with a pretrained "
        "transformer and write them in caseqa's embedding file format.",
    )
    parser.add_argument("--dataset", required=True, help="dataset file saved by the qa engine")
    parser.add_argument("--model", required=True, help="pretrained model name or local directory")
    parser.add_argument(
        "--out", required=True, help="manifest path; sibling files are written next to it"
    )
    parser.add_argument(
        "--targets",
        nargs="+",
        choices=VALID_TARGETS,
        default=list(VALID_TARGETS),
        metavar="TARGET",
        help=f"what to embed: any of {', '.join(VALID_TARGETS)} (default: all)",
    )
    parser.add_argument(
        "--question-pooling",
        choices=POOLING_MODES,
        default="first-token",
        help="pooling for question vectors (default: first-token)",
    )
    parser.add_argument(
        "--span-pooling",
        choices=POOLING_MODES,
        default="mean",
        help="pooling for span vectors (default: mean)",
    )
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        from transformers.utils import logging as hf_logging

        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
        job = ExportJob(
            dataset=args.dataset,
            model=args.model,
            out=args.out,
            targets=tuple(args.targets),
            question_pooling=args.question_pooling,
            span_pooling=args.span_pooling,
            batch_size=args.batch_size,
        )
        report = export(job)
    except _ERRORS as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(asdict(report), sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
