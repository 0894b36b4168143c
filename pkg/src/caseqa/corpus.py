"""Corpus model: tokens, spans, cases, MRQA ingestion, and dataset statistics.

A case is a solved problem kept for later reuse: a question, the set of gold
answer spans, and the passage the answers live in. Everything downstream
(retrieval, span scoring, training) works over these records.
"""

from __future__ import annotations

import gzip
import json
from collections import defaultdict
from dataclasses import dataclass, field

MASK_TOKEN = "[MASK]"


@dataclass(frozen=True)
class Token:
    """A surface token with half-open character offsets into its source text."""

    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class AnswerSpan:
    """A gold answer occurrence, addressed both by token and character offsets.

    Token and character ends are exclusive. Character offsets must sit exactly
    on the boundaries of the tokens they cover, and text must equal the
    passage slice.
    """

    token_start: int
    token_end: int
    char_start: int
    char_end: int
    text: str

    def __post_init__(self):
        if not (0 <= self.token_start < self.token_end):
            raise ValueError(f"bad token span ({self.token_start}, {self.token_end})")
        if not (0 <= self.char_start < self.char_end):
            raise ValueError(f"bad char span ({self.char_start}, {self.char_end})")

    @property
    def token_length(self) -> int:
        return self.token_end - self.token_start


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class Case:
    """One stored problem: question, non-empty deduplicated answer set, passage."""

    question: Question
    answers: tuple[AnswerSpan, ...]
    passage: Passage

    def __post_init__(self):
        if not self.answers:
            raise ValueError(f"case {self.question.id}: empty answer set")
        seen = set()
        for a in self.answers:
            key = (a.token_start, a.token_end)
            if key in seen:
                raise ValueError(f"case {self.question.id}: duplicate answer span {key}")
            seen.add(key)
            if a.token_end > len(self.passage.tokens):
                raise ValueError(f"case {self.question.id}: answer span {key} outside passage")
            first, last = self.passage.tokens[a.token_start], self.passage.tokens[a.token_end - 1]
            if a.char_start != first.char_start or a.char_end != last.char_end:
                raise ValueError(
                    f"case {self.question.id}: answer span {key} char offsets "
                    f"({a.char_start}, {a.char_end}) off token boundaries"
                )
            if self.passage.text[a.char_start : a.char_end] != a.text:
                raise ValueError(f"case {self.question.id}: answer text does not match passage slice")


@dataclass(frozen=True)
class Dataset:
    name: str
    cases: tuple[Case, ...]

    def __post_init__(self):
        ids = set()
        for c in self.cases:
            if c.question.id in ids:
                raise ValueError(f"duplicate question id {c.question.id!r}")
            ids.add(c.question.id)

    def __len__(self) -> int:
        return len(self.cases)

    def by_qid(self) -> dict[str, Case]:
        return {c.question.id: c for c in self.cases}


def _is_punct(ch: str) -> bool:
    return not ch.isalnum() and not ch.isspace()


def tokenize(text: str) -> tuple[Token, ...]:
    """Split on whitespace, then peel leading/trailing punctuation into own tokens.

    Interior punctuation stays put ("don't", "U.S"). The literal [MASK] is kept
    atomic so masked questions re-tokenize to themselves.
    """
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        _split_chunk(text, i, j, tokens)
        i = j
    return tuple(tokens)


def _split_chunk(text: str, start: int, end: int, out: list[Token]) -> None:
    s, e = start, end
    while s < e and _is_punct(text[s]) and not text.startswith(MASK_TOKEN, s):
        out.append(Token(text[s], s, s + 1))
        s += 1
    trailing: list[Token] = []
    while e > s and _is_punct(text[e - 1]) and not text.endswith(MASK_TOKEN, s, e):
        trailing.append(Token(text[e - 1], e - 1, e))
        e -= 1
    if s < e:
        out.append(Token(text[s:e], s, e))
    out.extend(reversed(trailing))


@dataclass
class IngestSummary:
    """What happened during ingestion; malformed input is skipped, never fatal."""

    lines_read: int = 0
    cases_kept: int = 0
    skipped_lines: int = 0
    skipped_questions: int = 0
    dropped_answers: int = 0
    errors: list[str] = field(default_factory=list)

    def record(self, msg: str, cap: int = 50) -> None:
        if len(self.errors) < cap:
            self.errors.append(msg)


@dataclass(frozen=True)
class IngestResult:
    dataset: Dataset
    summary: IngestSummary


def ingest_mrqa(path: str, name: str | None = None, limit: int | None = None) -> IngestResult:
    """Read an MRQA-format JSONL file (optionally gzipped) into a Dataset.

    First line is a header. Each data line holds a context plus its questions;
    every (question, context) pair becomes one Case. MRQA char spans use
    inclusive ends and are converted to exclusive. Answers are validated
    against the context text and our token boundaries; failures drop the
    answer (or the question, if nothing survives) and are counted.
    """
    summary = IngestSummary()
    cases: list[Case] = []
    seen_qids: dict[str, int] = {}
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            if limit is not None and len(cases) >= limit:
                break
            line = line.strip()
            if not line:
                continue
            summary.lines_read += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                summary.skipped_lines += 1
                summary.record(f"line {line_no}: bad JSON: {exc}")
                continue
            if "header" in record:
                continue
            context = record.get("context")
            qas = record.get("qas")
            if not isinstance(context, str) or not isinstance(qas, list):
                summary.skipped_lines += 1
                summary.record(f"line {line_no}: missing context/qas")
                continue
            passage = Passage(id=f"ctx{line_no:06d}", text=context, tokens=tokenize(context))
            starts = {t.char_start: k for k, t in enumerate(passage.tokens)}
            ends = {t.char_end: k for k, t in enumerate(passage.tokens)}
            for qa in qas:
                if limit is not None and len(cases) >= limit:
                    break
                case = _case_from_qa(qa, passage, starts, ends, line_no, seen_qids, summary)
                if case is not None:
                    cases.append(case)
    summary.cases_kept = len(cases)
    dataset = Dataset(name=name or str(path), cases=tuple(cases))
    return IngestResult(dataset=dataset, summary=summary)


def _case_from_qa(qa, passage, starts, ends, line_no, seen_qids, summary) -> Case | None:
    qid = qa.get("qid")
    qtext = qa.get("question")
    detected = qa.get("detected_answers")
    if not isinstance(qid, str) or not isinstance(qtext, str) or not isinstance(detected, list):
        summary.skipped_questions += 1
        summary.record(f"line {line_no}: malformed qa entry")
        return None
    answers: list[AnswerSpan] = []
    taken: set[tuple[int, int]] = set()
    for det in detected:
        claimed = det.get("text") if isinstance(det, dict) else None
        spans = det.get("char_spans") if isinstance(det, dict) else None
        if not isinstance(spans, list):
            summary.dropped_answers += 1
            summary.record(f"line {line_no} qid {qid}: detected answer without char_spans")
            continue
        for span in spans:
            try:
                cs, ce_incl = int(span[0]), int(span[1])
            except (TypeError, ValueError, IndexError):
                summary.dropped_answers += 1
                summary.record(f"line {line_no} qid {qid}: unreadable char span {span!r}")
                continue
            ce = ce_incl + 1
            if not (0 <= cs < ce <= len(passage.text)):
                summary.dropped_answers += 1
                summary.record(f"line {line_no} qid {qid}: span ({cs}, {ce_incl}) out of bounds")
                continue
            slice_text = passage.text[cs:ce]
            if isinstance(claimed, str) and claimed and slice_text.casefold() != claimed.casefold():
                summary.dropped_answers += 1
                summary.record(f"line {line_no} qid {qid}: offsets do not match context text")
                continue
            ts = starts.get(cs)
            te_tok = ends.get(ce)
            if ts is None or te_tok is None or te_tok < ts:
                summary.dropped_answers += 1
                summary.record(f"line {line_no} qid {qid}: span ({cs}, {ce_incl}) off token boundary")
                continue
            key = (ts, te_tok + 1)
            if key in taken:
                continue
            taken.add(key)
            answers.append(AnswerSpan(ts, te_tok + 1, cs, ce, slice_text))
    if not answers:
        summary.skipped_questions += 1
        summary.record(f"line {line_no} qid {qid}: no valid answers")
        return None
    n = seen_qids.get(qid, 0)
    seen_qids[qid] = n + 1
    unique_qid = qid if n == 0 else f"{qid}#{n}"
    question = Question(id=unique_qid, text=qtext, tokens=tokenize(qtext))
    return Case(question=question, answers=tuple(answers), passage=passage)


def truncate_context(case: Case, window: int) -> tuple[Case, int]:
    """Crop the passage to ±window tokens around the first answer span.

    Answers that survive the crop keep their text with shifted offsets; the
    rest are dropped and counted. The first answer always survives.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    first = case.answers[0]
    lo = max(0, first.token_start - window)
    hi = min(len(case.passage.tokens), first.token_end + window)
    if lo == 0 and hi == len(case.passage.tokens):
        return case, 0
    char_lo = case.passage.tokens[lo].char_start
    char_hi = case.passage.tokens[hi - 1].char_end
    text = case.passage.text[char_lo:char_hi]
    tokens = tokenize(text)
    expected = tuple(
        Token(t.text, t.char_start - char_lo, t.char_end - char_lo) for t in case.passage.tokens[lo:hi]
    )
    if tokens != expected:
        raise ValueError(f"case {case.question.id}: crop does not re-tokenize cleanly")
    passage = Passage(id=case.passage.id, text=text, tokens=tokens)
    kept = []
    dropped = 0
    for a in case.answers:
        if a.token_start >= lo and a.token_end <= hi:
            kept.append(
                AnswerSpan(
                    a.token_start - lo,
                    a.token_end - lo,
                    a.char_start - char_lo,
                    a.char_end - char_lo,
                    a.text,
                )
            )
        else:
            dropped += 1
    return Case(question=case.question, answers=tuple(kept), passage=passage), dropped


@dataclass(frozen=True)
class DatasetStats:
    case_count: int
    mean_answers_per_case: float
    unique_qa_pairs: int
    multi_context_pairs: int
    multi_context_fraction: float


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """Counts plus how many (question text, answer text) pairs recur across passages."""
    total_answers = 0
    contexts_by_pair: dict[tuple[str, str], set[str]] = defaultdict(set)
    for case in dataset.cases:
        total_answers += len(case.answers)
        for text in {a.text for a in case.answers}:
            contexts_by_pair[(case.question.text, text)].add(case.passage.id)
    multi = sum(1 for pids in contexts_by_pair.values() if len(pids) >= 2)
    unique = len(contexts_by_pair)
    return DatasetStats(
        case_count=len(dataset),
        mean_answers_per_case=total_answers / len(dataset) if len(dataset) else 0.0,
        unique_qa_pairs=unique,
        multi_context_pairs=multi,
        multi_context_fraction=multi / unique if unique else 0.0,
    )
