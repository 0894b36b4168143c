"""Batch export of transformer embeddings for questions and passage spans.

Question vectors pool the final hidden layer over the pre-masked question
text and are L2-normalized; span vectors pool the passage's contextual
token states over the span's character range and stay unnormalized. Rows
follow dataset order: questions first, then spans per passage, each key
emitted once at its first appearance. Spans whose character boundaries
cannot be matched to subword boundaries are listed in an exceptions file
and omitted from the vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .align import AlignmentError, align_span
from .embedfile import QUESTION_KIND, SPAN_KIND, write_embedding_file
from .records import CaseRecord, SpanRecord, read_dataset_records

VALID_TARGETS = ("questions", "answers", "candidates")
POOLING_MODES = ("first-token", "mean")

# Fast tokenizers use this sentinel when no real length limit is configured.
_LENGTH_SENTINEL = 1_000_000


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportJob:
    """One export run: which dataset, which model, what to embed, where to."""

    dataset: str
    model: str
    out: str
    targets: tuple[str, ...] = VALID_TARGETS
    question_pooling: str = "first-token"
    span_pooling: str = "mean"
    batch_size: int = 32

    def __post_init__(self) -> None:
        if not self.targets:
            raise ExportError("targets must not be empty")
        for t in self.targets:
            if t not in VALID_TARGETS:
                raise ExportError(f"unknown target {t!r}; choose from {', '.join(VALID_TARGETS)}")
        if len(set(self.targets)) != len(self.targets):
            raise ExportError("duplicate targets")
        for mode in (self.question_pooling, self.span_pooling):
            if mode not in POOLING_MODES:
                raise ExportError(f"unknown pooling {mode!r}; choose from {', '.join(POOLING_MODES)}")
        if self.batch_size < 1:
            raise ExportError("batch size must be at least 1")


@dataclass(frozen=True)
class ExportReport:
    manifest_path: str
    dim: int
    questions: int
    spans: int
    skipped_spans: int
    fingerprint: str


class _Backend:
    """Frozen pretrained encoder; final-layer states only, no gradients."""

    def __init__(self, model_name: str, batch_size: int):
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        if not self.tokenizer.is_fast:
            raise ExportError(f"tokenizer for {model_name!r} does not expose character offsets")
        self.model = AutoModel.from_pretrained(model_name)
        self.model.eval()
        self.batch_size = batch_size
        self.dim = int(self.model.config.hidden_size)
        rev = getattr(self.model.config, "_commit_hash", None)
        self.revision = str(rev) if rev else "local"
        limits = [
            v
            for v in (
                getattr(self.model.config, "max_position_embeddings", None),
                self.tokenizer.model_max_length,
            )
            if isinstance(v, int) and 0 < v < _LENGTH_SENTINEL
        ]
        self.max_length = min(limits) if limits else None

    def states(self, texts: list[str]):
        """Yield (hidden [n x dim] float32, offsets) per text, padding stripped."""
        for lo in range(0, len(texts), self.batch_size):
            chunk = texts[lo : lo + self.batch_size]
            enc = self.tokenizer(
                chunk,
                padding=True,
                truncation=self.max_length is not None,
                max_length=self.max_length,
                return_offsets_mapping=True,
                return_tensors="pt",
            )
            model_inputs = {k: v for k, v in enc.items() if k != "offset_mapping"}
            with torch.no_grad():
                hidden = self.model(**model_inputs).last_hidden_state.cpu().numpy()
            for j in range(len(chunk)):
                n = int(enc["attention_mask"][j].sum())
                offsets = [tuple(pair) for pair in enc["offset_mapping"][j, :n].tolist()]
                yield hidden[j, :n].copy(), offsets


def _pool_question(hidden: np.ndarray, offsets, mode: str, qid: str) -> np.ndarray:
    if mode == "first-token":
        vec = hidden[0]
    else:
        rows = [i for i, (s, e) in enumerate(offsets) if e > s]
        if not rows:
            raise ExportError(f"question {qid!r} has no content tokens")
        vec = hidden[rows].mean(axis=0)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ExportError(f"question {qid!r} produced a zero vector")
    return (vec / norm).astype("<f4")


def _pool_span(hidden: np.ndarray, rows: list[int], mode: str) -> np.ndarray:
    if mode == "first-token":
        return hidden[rows[0]].astype("<f4")
    return hidden[rows].mean(axis=0).astype("<f4")


def _collect(job: ExportJob, records: tuple[CaseRecord, ...]):
    """Unique questions, passages with span requests, and the requests themselves."""
    want_questions = "questions" in job.targets
    want_answers = "answers" in job.targets
    want_candidates = "candidates" in job.targets

    questions: list[tuple[str, str]] = []
    seen_q: dict[str, str] = {}
    passage_text: dict[str, str] = {}
    passage_order: list[str] = []
    requests: dict[str, list[SpanRecord]] = {}
    seen_spans: dict[tuple[str, int, int], SpanRecord] = {}

    for rec in records:
        if rec.qid in seen_q:
            if seen_q[rec.qid] != rec.masked_question:
                raise ExportError(f"question id {rec.qid!r} reappears with different masked text")
        else:
            seen_q[rec.qid] = rec.masked_question
            if want_questions:
                questions.append((rec.qid, rec.masked_question))
        if rec.passage_id in passage_text:
            if passage_text[rec.passage_id] != rec.passage:
                raise ExportError(f"passage id {rec.passage_id!r} reappears with different text")
        else:
            passage_text[rec.passage_id] = rec.passage
            passage_order.append(rec.passage_id)

        wanted: list[SpanRecord] = []
        if want_answers:
            wanted.extend(rec.answers)
        if want_candidates:
            if rec.candidates is None:
                raise ExportError(
                    f"{job.dataset}: record for question {rec.qid!r} has no candidate spans; "
                    "save the dataset with candidates included to export them"
                )
            wanted.extend(rec.candidates)
        for span in wanted:
            key = (rec.passage_id, span.token_start, span.token_end)
            prior = seen_spans.get(key)
            if prior is None:
                seen_spans[key] = span
                requests.setdefault(rec.passage_id, []).append(span)
            elif (prior.char_start, prior.char_end) != (span.char_start, span.char_end):
                raise ExportError(
                    f"span {key!r} reappears with different character offsets"
                )

    passages = [(pid, passage_text[pid]) for pid in passage_order if requests.get(pid)]
    return questions, passages, requests


def export(job: ExportJob) -> ExportReport:
    """Run the job and write manifest, vectors, keys, exceptions, alignment."""
    dataset_name, records = read_dataset_records(job.dataset)
    backend = _Backend(job.model, job.batch_size)
    questions, passages, requests = _collect(job, records)

    rows: list[np.ndarray] = []
    keys: list[tuple[str, str, int | None, int | None]] = []

    q_texts = [text for _, text in questions]
    for (qid, _), (hidden, offsets) in zip(questions, backend.states(q_texts)):
        rows.append(_pool_question(hidden, offsets, job.question_pooling, qid))
        keys.append((QUESTION_KIND, qid, None, None))

    exceptions: list[dict] = []
    alignment: list[tuple[str, int, int, int, int]] = []
    p_texts = [text for _, text in passages]
    for (pid, _), (hidden, offsets) in zip(passages, backend.states(p_texts)):
        for span in requests[pid]:
            try:
                sub = align_span(span.char_start, span.char_end, offsets)
            except AlignmentError as exc:
                exceptions.append(
                    {
                        "passage_id": pid,
                        "token_start": span.token_start,
                        "token_end": span.token_end,
                        "char_start": span.char_start,
                        "char_end": span.char_end,
                        "text": span.text,
                        "reason": str(exc),
                    }
                )
                continue
            rows.append(_pool_span(hidden, sub, job.span_pooling))
            keys.append((SPAN_KIND, pid, span.token_start, span.token_end))
            alignment.append((pid, span.token_start, span.token_end, sub[0], sub[-1] + 1))

    matrix = np.vstack(rows) if rows else np.zeros((0, backend.dim), dtype="<f4")
    path = Path(job.out)
    exc_name = path.stem + ".exceptions.jsonl"
    align_name = path.stem + ".alignment.tsv"
    fingerprint = f"{job.model}@{backend.revision}"
    extra = {
        "fingerprint": fingerprint,
        "model": job.model,
        "revision": backend.revision,
        "layer": "final",
        "pooling": {"question": job.question_pooling, "span": job.span_pooling},
        "targets": [t for t in VALID_TARGETS if t in job.targets],
        "dataset": dataset_name,
        "exceptions": exc_name,
        "alignment": align_name,
        "aligned_spans": len(alignment),
        "skipped_spans": len(exceptions),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path.parent / exc_name, "w", encoding="utf-8") as fh:
        for entry in exceptions:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    with open(path.parent / align_name, "w", encoding="utf-8") as fh:
        for pid, ts, te, lo, hi in alignment:
            fh.write(f"{pid}\t{ts}\t{te}\t{lo}\t{hi}\n")
    write_embedding_file(str(path), matrix, keys, extra=extra)
    return ExportReport(
        manifest_path=str(path),
        dim=backend.dim,
        questions=len(questions),
        spans=len(alignment),
        skipped_spans=len(exceptions),
        fingerprint=fingerprint,
    )
