"""The casebase: stored cases with their embeddings, retrieval, and persistence.

Retrieval ranks entries by cosine between unit-normalized masked-question
vectors, so the dot product is the score. Entries are immutable once built;
augmentation returns a new casebase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from .encoder import QUESTION_KIND, SPAN_KIND, _normalize_or_basis
from .textproc import extract_wh_keyword, mask_with_rules


class CasebaseFormatError(ValueError):
    """On-disk casebase is missing files or fails validation."""


class FingerprintMismatchError(ValueError):
    """Augmenting with an encoder that differs from the one that built the casebase."""


@dataclass
class CaseEntry:
    case: Case
    question_vec: np.ndarray  # unit norm
    answer_vecs: tuple[np.ndarray, ...]  # one per answer, unnormalized
    wh: str | None

    @property
    def qid(self) -> str:
        return self.case.question.id


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    sim_threshold: float | None = None
    use_wh_filter: bool = False
    exclude_question_id: str | None = None


def training_retrieval_config(k: int, qid: str, sim_threshold: float = 0.95) -> RetrievalConfig:
    """Training-time defaults: near-duplicate and wh filters on, self excluded."""
    return RetrievalConfig(k=k, sim_threshold=sim_threshold, use_wh_filter=True, exclude_question_id=qid)


@dataclass(frozen=True)
class RetrievedCase:
    entry: CaseEntry
    score: float


@dataclass
class Casebase:
    entries: list[CaseEntry]
    dim: int
    encoder_fingerprint: str
    _matrix: np.ndarray | None = field(default=None, repr=False)
    _wh_index: dict[str | None, list[int]] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def question_matrix(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self.entries):
            self._matrix = (
                np.stack([e.question_vec for e in self.entries])
                if self.entries
                else np.zeros((0, self.dim))
            )
        return self._matrix

    def wh_index(self) -> dict[str | None, list[int]]:
        if self._wh_index is None or sum(len(v) for v in self._wh_index.values()) != len(self.entries):
            idx: dict[str | None, list[int]] = {}
            for i, e in enumerate(self.entries):
                idx.setdefault(e.wh, []).append(i)
            self._wh_index = idx
        return self._wh_index

    def index_by_qid(self) -> dict[str, int]:
        return {e.qid: i for i, e in enumerate(self.entries)}


def build(dataset: Dataset, backend, gazetteer: frozenset[str] = frozenset()) -> Casebase:
    """Encode every case's masked question and answers with the given backend."""
    entries: list[CaseEntry] = []
    for case in dataset.cases:
        try:
            mq = mask_with_rules(case.question, gazetteer)
            qvec = _normalize_or_basis(np.asarray(backend.encode_question(mq), dtype=np.float64))
            avecs = tuple(
                np.asarray(backend.encode_span(case.passage, a.token_start, a.token_end), dtype=np.float64)
                for a in case.answers
            )
        except Exception as exc:
            raise type(exc)(f"case {case.question.id}: {exc}") from exc
        entries.append(CaseEntry(case, qvec, avecs, extract_wh_keyword(case.question)))
    return Casebase(entries=entries, dim=backend.dim, encoder_fingerprint=backend.fingerprint)


def retrieve(cb: Casebase, query_vec: np.ndarray, query_wh: str | None, cfg: RetrievalConfig) -> list[RetrievedCase]:
    """Top-k entries by cosine, after the configured filters.

    Filters: self-exclusion by question id; optional minimum score (entries
    strictly below are dropped); optional wh agreement, where a missing wh is
    its own class and only matches queries that also lack one. Ties keep
    entry order.
    """
    if cfg.k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query_vec, dtype=np.float64)
    if query.shape != (cb.dim,):
        raise ValueError(f"query vector has shape {query.shape}, casebase dim is {cb.dim}")
    if cfg.use_wh_filter:
        indices = cb.wh_index().get(query_wh, [])
    else:
        indices = range(len(cb.entries))
    candidates = [i for i in indices if cb.entries[i].qid != cfg.exclude_question_id]
    if not candidates:
        return []
    scores = cb.question_matrix()[candidates] @ query
    kept = [
        (i, float(s))
        for i, s in zip(candidates, scores)
        if cfg.sim_threshold is None or s >= cfg.sim_threshold
    ]
    kept.sort(key=lambda pair: -pair[1])  # stable: ties keep entry order
    return [RetrievedCase(cb.entries[i], s) for i, s in kept[: cfg.k]]


def augment(cb: Casebase, new_cases: Dataset, backend, gazetteer: frozenset[str] = frozenset()) -> Casebase:
    """New casebase with the extra cases appended; encoder must match."""
    if backend.fingerprint != cb.encoder_fingerprint:
        raise FingerprintMismatchError(
            f"casebase was built with encoder {cb.encoder_fingerprint}, got {backend.fingerprint}"
        )
    existing = {e.qid for e in cb.entries}
    clash = [c.question.id for c in new_cases.cases if c.question.id in existing]
    if clash:
        raise ValueError(f"augment would duplicate question ids: {clash[:5]}")
    added = build(new_cases, backend, gazetteer)
    return Casebase(
        entries=cb.entries + added.entries,
        dim=cb.dim,
        encoder_fingerprint=cb.encoder_fingerprint,
    )


# --- persistence ---------------------------------------------------------------

_MANIFEST = "manifest.json"
_VECTORS = "vectors.f32"
_KEYS = "keys.tsv"
_CASES = "cases.jsonl"


def save(cb: Casebase, dirpath: str) -> None:
    """Write manifest + f32le vectors + keys + cases JSONL into a directory.

    Rows are entry-major: each entry's question vector, then its answer
    vectors, so loading is positional. Identical casebases produce identical
    bytes.
    """
    out = Path(dirpath)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[np.ndarray] = []
    key_lines: list[str] = []
    case_lines: list[str] = []
    for e in cb.entries:
        rows.append(e.question_vec)
        key_lines.append(f"{QUESTION_KIND}\t{e.qid}\t\t\n")
        for a, vec in zip(e.case.answers, e.answer_vecs):
            rows.append(vec)
            key_lines.append(f"{SPAN_KIND}\t{e.case.passage.id}\t{a.token_start}\t{a.token_end}\n")
        case_lines.append(
            json.dumps(
                {
                    "qid": e.qid,
                    "question": e.case.question.text,
                    "passage_id": e.case.passage.id,
                    "passage": e.case.passage.text,
                    "wh": e.wh,
                    "answers": [
                        {
                            "token_start": a.token_start,
                            "token_end": a.token_end,
                            "char_start": a.char_start,
                            "char_end": a.char_end,
                            "text": a.text,
                        }
                        for a in e.case.answers
                    ],
                },
                sort_keys=True,
            )
            + "\n"
        )
    matrix = np.stack(rows) if rows else np.zeros((0, cb.dim))
    np.ascontiguousarray(matrix, dtype="<f4").tofile(out / _VECTORS)
    (out / _KEYS).write_text("".join(key_lines), encoding="utf-8")
    (out / _CASES).write_text("".join(case_lines), encoding="utf-8")
    manifest = {
        "format": "caseqa-casebase",
        "version": 1,
        "dim": cb.dim,
        "count": len(cb.entries),
        "vector_count": int(matrix.shape[0]),
        "encoder_fingerprint": cb.encoder_fingerprint,
        "dtype": "f32le",
        "vectors": _VECTORS,
        "keys": _KEYS,
        "cases": _CASES,
    }
    (out / _MANIFEST).write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")


def load(dirpath: str) -> Casebase:
    """Inverse of save; vectors round-trip exactly at 32-bit float precision."""
    root = Path(dirpath)
    try:
        manifest = json.loads((root / _MANIFEST).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CasebaseFormatError(f"{root}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != "caseqa-casebase":
        raise CasebaseFormatError(f"{root}: not a casebase directory")
    dim = int(manifest["dim"])
    count = int(manifest["count"])
    vector_count = int(manifest["vector_count"])
    raw = np.fromfile(root / manifest["vectors"], dtype="<f4")
    if raw.size != vector_count * dim:
        raise CasebaseFormatError(
            f"{root / manifest['vectors']}: expected {vector_count * dim} float32 values, "
            f"found {raw.size} (byte offset {raw.size * 4})"
        )
    matrix = raw.reshape(vector_count, dim).astype(np.float64)
    entries: list[CaseEntry] = []
    row = 0
    with open(root / manifest["cases"], encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CasebaseFormatError(f"{root}: cases line {line_no}: {exc}") from exc
            passage = Passage(rec["passage_id"], rec["passage"], tokenize(rec["passage"]))
            question = Question(rec["qid"], rec["question"], tokenize(rec["question"]))
            answers = tuple(
                AnswerSpan(a["token_start"], a["token_end"], a["char_start"], a["char_end"], a["text"])
                for a in rec["answers"]
            )
            case = Case(question=question, answers=answers, passage=passage)
            if row + 1 + len(answers) > vector_count:
                raise CasebaseFormatError(f"{root}: vector rows exhausted at entry {line_no}")
            qvec = matrix[row]
            avecs = tuple(matrix[row + 1 + i] for i in range(len(answers)))
            row += 1 + len(answers)
            entries.append(CaseEntry(case, qvec, avecs, rec.get("wh")))
    if len(entries) != count or row != vector_count:
        raise CasebaseFormatError(
            f"{root}: manifest promises {count} entries/{vector_count} rows, "
            f"found {len(entries)}/{row}"
        )
    return Casebase(entries=entries, dim=dim, encoder_fingerprint=manifest["encoder_fingerprint"])
