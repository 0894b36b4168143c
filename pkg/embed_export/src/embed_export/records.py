"""Reader for the dataset interchange file the qa engine saves.

One JSON header line, then one JSON record per case. Records carry the
question's pre-masked text alongside the passage, gold answer offsets,
and optionally the candidate spans, so this package never re-runs the
engine's masking or span-generation rules. Only the fields the exporter
consumes are modeled; anything else in a record is ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

FORMAT = "caseqa-dataset"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SpanRecord:
    token_start: int
    token_end: int
    char_start: int
    char_end: int
    text: str


@dataclass(frozen=True)
class CaseRecord:
    qid: str
    masked_question: str
    passage_id: str
    passage: str
    answers: tuple[SpanRecord, ...]
    candidates: tuple[SpanRecord, ...] | None


def _int_field(d: dict, key: str) -> int:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"{key} must be an integer, got {v!r}")
    return v


def _str_field(d: dict, key: str) -> str:
    v = d[key]
    if not isinstance(v, str):
        raise TypeError(f"{key} must be a string, got {v!r}")
    return v


def _span(d: dict) -> SpanRecord:
    return SpanRecord(
        token_start=_int_field(d, "token_start"),
        token_end=_int_field(d, "token_end"),
        char_start=_int_field(d, "char_start"),
        char_end=_int_field(d, "char_end"),
        text=_str_field(d, "text"),
    )


def read_dataset_records(path: str) -> tuple[str, tuple[CaseRecord, ...]]:
    """Return (dataset name, records). Raises DatasetFormatError."""
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line) if header_line.strip() else {}
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: unreadable header: {exc}") from exc
        if header.get("format") != FORMAT:
            raise DatasetFormatError(f"{path}: not a {FORMAT} file")
        records: list[CaseRecord] = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                cands = rec.get("candidates")
                records.append(
                    CaseRecord(
                        qid=_str_field(rec, "qid"),
                        masked_question=_str_field(rec, "masked_question"),
                        passage_id=_str_field(rec, "passage_id"),
                        passage=_str_field(rec, "passage"),
                        answers=tuple(_span(a) for a in rec["answers"]),
                        candidates=None if cands is None else tuple(_span(c) for c in cands),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{path}: line {line_no}: {exc}") from exc
    return str(header.get("name", path)), tuple(records)
