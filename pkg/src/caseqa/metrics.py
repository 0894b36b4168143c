"""Answer-level and span-level scoring.

Text metrics follow the SQuAD/MRQA convention: answers are lowercased,
punctuation-stripped, article-free, and whitespace-collapsed before
comparison; F1 is a bag-of-tokens overlap maximized over gold answers.
Span metrics compare character offsets instead of text.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .corpus import Case, Dataset
from .spanner import generate_candidates

SUBSET_ALL = "all"
SUBSET_MULTI_MENTION = "multi-mention"

_PUNCT = set(string.punctuation)
_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> float:
    if not golds:
        raise ValueError("empty gold answer list")
    pred = normalize_answer(prediction)
    return 1.0 if any(pred == normalize_answer(g) for g in golds) else 0.0


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    if not golds:
        raise ValueError("empty gold answer list")
    return max(_f1_single(prediction, g) for g in golds)


def span_em(
    pred_span: tuple[str, int, int], gold_spans: Sequence[tuple[str, int, int]]
) -> float:
    """1.0 iff the predicted char offsets equal some gold occurrence exactly.

    All spans must come from the same passage; a mismatch is a pipeline bug,
    not a zero.
    """
    if not gold_spans:
        raise ValueError("empty gold span list")
    pid, cs, ce = pred_span
    for gpid, gcs, gce in gold_spans:
        if gpid != pid:
            raise ValueError(f"span passages differ: {pid!r} vs {gpid!r}")
        if (gcs, gce) == (cs, ce):
            return 1.0
    return 0.0


def span_f1(
    pred_span: tuple[str, int, int], gold_spans: Sequence[tuple[str, int, int]]
) -> float:
    """Char-index-set overlap F1, maximized over gold occurrences."""
    if not gold_spans:
        raise ValueError("empty gold span list")
    pid, cs, ce = pred_span
    if ce <= cs:
        return 0.0
    best = 0.0
    for gpid, gcs, gce in gold_spans:
        if gpid != pid:
            raise ValueError(f"span passages differ: {pid!r} vs {gpid!r}")
        overlap = max(0, min(ce, gce) - max(cs, gcs))
        if overlap == 0:
            continue
        precision = overlap / (ce - cs)
        recall = overlap / (gce - gcs)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def has_multiple_mentions(case: Case) -> bool:
    """Some gold answer text occurs at least twice in the passage
    (case-insensitive, non-overlapping count)."""
    passage = case.passage.text.lower()
    return any(passage.count(a.text.lower()) >= 2 for a in case.answers)


@dataclass(frozen=True)
class PredictedAnswer:
    text: str
    char_start: int
    char_end: int
    passage_id: str


@dataclass(frozen=True)
class InstanceScore:
    qid: str
    em: float
    f1: float
    span_em: float
    span_f1: float
    missing: bool


@dataclass(frozen=True)
class EvalResult:
    n: int
    missing: int
    em: float  # percentages
    f1: float
    span_em: float
    span_f1: float
    candidate_recall: float  # fraction in [0, 1]


def evaluate(
    predictions: Mapping[str, PredictedAnswer],
    dataset: Dataset,
    subset: str | Callable[[Case], bool] = SUBSET_ALL,
    gazetteer: frozenset[str] = frozenset(),
) -> tuple[EvalResult, list[InstanceScore]]:
    """Mean metrics (x100) over the selected cases plus a per-instance breakdown.

    A case with no prediction scores zero everywhere but stays in the
    denominator. candidate_recall is the fraction of cases whose gold spans
    include at least one generated candidate; it bounds achievable span EM.
    """
    if callable(subset):
        keep = subset
    elif subset == SUBSET_ALL:
        keep = lambda case: True
    elif subset == SUBSET_MULTI_MENTION:
        keep = has_multiple_mentions
    else:
        raise ValueError(f"unknown subset {subset!r}")

    rows: list[InstanceScore] = []
    covered = 0
    n = 0
    for case in dataset.cases:
        if not keep(case):
            continue
        n += 1
        cand_offsets = {
            (c.token_start, c.token_end) for c in generate_candidates(case.passage, gazetteer)
        }
        if any((a.token_start, a.token_end) in cand_offsets for a in case.answers):
            covered += 1
        qid = case.question.id
        pred = predictions.get(qid)
        if pred is None:
            rows.append(InstanceScore(qid, 0.0, 0.0, 0.0, 0.0, missing=True))
            continue
        golds_text = [a.text for a in case.answers]
        gold_spans = [(case.passage.id, a.char_start, a.char_end) for a in case.answers]
        pred_span = (pred.passage_id, pred.char_start, pred.char_end)
        rows.append(
            InstanceScore(
                qid=qid,
                em=exact_match(pred.text, golds_text),
                f1=token_f1(pred.text, golds_text),
                span_em=span_em(pred_span, gold_spans),
                span_f1=span_f1(pred_span, gold_spans),
                missing=False,
            )
        )
    if n == 0:
        return EvalResult(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0), rows
    missing = sum(1 for r in rows if r.missing)
    mean = lambda vals: 100.0 * sum(vals) / n
    return (
        EvalResult(
            n=n,
            missing=missing,
            em=mean([r.em for r in rows]),
            f1=mean([r.f1 for r in rows]),
            span_em=mean([r.span_em for r in rows]),
            span_f1=mean([r.span_f1 for r in rows]),
            candidate_recall=covered / n,
        ),
        rows,
    )
