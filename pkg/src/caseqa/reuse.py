"""Reuse retrieved cases: score target candidates against stored answer vectors.

A candidate's score against one retrieved case is its best similarity to any
of that case's gold answer vectors. Per-case scores are summed across the
retrieved cases (raw sum by default) and the best-scoring candidate span is
the prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .casebase import Casebase, CaseEntry, RetrievalConfig, RetrievedCase, retrieve
from .corpus import Passage, Question
from .encoder import _normalize_or_basis
from .spanner import CandidateSpan, generate_candidates
from .textproc import extract_wh_keyword, mask_with_rules

SIM_DOT = "dot"
SIM_COSINE = "cosine"

AGG_SUM = "sum"
AGG_SOFTMAX = "softmax"


class NoCaseError(RuntimeError):
    """Retrieval produced nothing to reuse, even after the filter fallback."""


class NoCandidatesError(RuntimeError):
    """The target passage yielded no candidate spans."""


@dataclass(frozen=True)
class CaseScore:
    case_qid: str
    answer_index: int
    answer_text: str
    score: float


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: CandidateSpan
    per_case: tuple[CaseScore, ...]
    aggregate: float


@dataclass(frozen=True)
class Prediction:
    qid: str
    passage_id: str
    answer: CandidateSpan
    aggregate: float
    provenance: tuple[CaseScore, ...]
    per_case_predictions: tuple[tuple[str, CandidateSpan], ...]


def _similarities(answer_matrix: np.ndarray, cand_matrix: np.ndarray, sim: str) -> np.ndarray:
    """(answers, candidates) similarity matrix."""
    if sim == SIM_DOT:
        return answer_matrix @ cand_matrix.T
    if sim == SIM_COSINE:
        a_norm = np.linalg.norm(answer_matrix, axis=1, keepdims=True)
        c_norm = np.linalg.norm(cand_matrix, axis=1, keepdims=True)
        a = np.divide(answer_matrix, a_norm, out=np.zeros_like(answer_matrix), where=a_norm > 0)
        c = np.divide(cand_matrix, c_norm, out=np.zeros_like(cand_matrix), where=c_norm > 0)
        return a @ c.T
    raise ValueError(f"unknown similarity {sim!r}")


def score_against_case(
    cand_matrix: np.ndarray, entry: CaseEntry, sim: str = SIM_DOT
) -> tuple[np.ndarray, np.ndarray]:
    """Per-candidate (best score, best answer index) against one case.

    Ties take the first answer in scan order.
    """
    answers = np.stack(entry.answer_vecs)
    sims = _similarities(answers, cand_matrix, sim)
    best_idx = np.argmax(sims, axis=0)
    best = sims[best_idx, np.arange(sims.shape[1])]
    return best, best_idx


def _better(cand: CandidateSpan, idx: int, best: tuple[CandidateSpan, int] | None) -> bool:
    """Strictly-better under the deterministic tie-break order."""
    if best is None:
        return True
    other, other_idx = best
    return (cand.token_start, cand.token_length, idx) < (
        other.token_start,
        other.token_length,
        other_idx,
    )


def _argmax_candidate(cands: Sequence[CandidateSpan], scores: np.ndarray) -> int:
    """Highest score; ties broken by lower token_start, then shorter span, then order."""
    best_i: int | None = None
    for i, cand in enumerate(cands):
        if best_i is None or scores[i] > scores[best_i]:
            best_i = i
        elif scores[i] == scores[best_i] and _better(cand, i, (cands[best_i], best_i)):
            best_i = i
    assert best_i is not None
    return best_i


def score_candidates(
    cands: Sequence[CandidateSpan],
    cand_matrix: np.ndarray,
    retrieved: Sequence[RetrievedCase],
    sim: str = SIM_DOT,
    aggregation: str = AGG_SUM,
) -> list[ScoredCandidate]:
    """Aggregate per-case scores for every candidate.

    The softmax variant turns each case's score vector into a distribution
    over candidates before summing, making cases with different embedding
    scales contribute equally.
    """
    if not cands:
        raise NoCandidatesError("no candidate spans to score")
    if not retrieved:
        raise NoCaseError("no retrieved cases to score against")
    per_case_scores = []
    per_case_idx = []
    for rc in retrieved:
        best, best_idx = score_against_case(cand_matrix, rc.entry, sim)
        per_case_scores.append(best)
        per_case_idx.append(best_idx)
    if aggregation == AGG_SUM:
        contribs = per_case_scores
    elif aggregation == AGG_SOFTMAX:
        contribs = []
        for best in per_case_scores:
            shifted = np.exp(best - best.max())
            contribs.append(shifted / shifted.sum())
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    totals = np.sum(contribs, axis=0)
    out = []
    for i, cand in enumerate(cands):
        per_case = tuple(
            CaseScore(
                case_qid=rc.entry.qid,
                answer_index=int(per_case_idx[j][i]),
                answer_text=rc.entry.case.answers[int(per_case_idx[j][i])].text,
                score=float(per_case_scores[j][i]),
            )
            for j, rc in enumerate(retrieved)
        )
        out.append(ScoredCandidate(candidate=cand, per_case=per_case, aggregate=float(totals[i])))
    return out


def predict_from_retrieved(
    qid: str,
    passage: Passage,
    cands: Sequence[CandidateSpan],
    cand_matrix: np.ndarray,
    retrieved: Sequence[RetrievedCase],
    sim: str = SIM_DOT,
    aggregation: str = AGG_SUM,
) -> Prediction:
    scored = score_candidates(cands, cand_matrix, retrieved, sim, aggregation)
    totals = np.array([s.aggregate for s in scored])
    win = _argmax_candidate([s.candidate for s in scored], totals)
    per_case_preds = []
    for j, rc in enumerate(retrieved):
        case_scores = np.array([s.per_case[j].score for s in scored])
        best = _argmax_candidate([s.candidate for s in scored], case_scores)
        per_case_preds.append((rc.entry.qid, scored[best].candidate))
    return Prediction(
        qid=qid,
        passage_id=passage.id,
        answer=scored[win].candidate,
        aggregate=scored[win].aggregate,
        provenance=scored[win].per_case,
        per_case_predictions=tuple(per_case_preds),
    )


def predict(
    question: Question,
    passage: Passage,
    cb: Casebase,
    backend,
    cfg: RetrievalConfig,
    sim: str = SIM_DOT,
    aggregation: str = AGG_SUM,
    gazetteer: frozenset[str] = frozenset(),
    fallback: bool = True,
) -> Prediction:
    """Full pipeline: mask, retrieve, generate candidates, score, argmax.

    If the configured filters leave nothing and fallback is on, retrieval is
    retried with only self-exclusion active; an empty result after that
    raises NoCaseError.
    """
    mq = mask_with_rules(question, gazetteer)
    qvec = _normalize_or_basis(np.asarray(backend.encode_question(mq), dtype=np.float64))
    wh = extract_wh_keyword(question)
    retrieved = retrieve(cb, qvec, wh, cfg)
    if not retrieved and fallback and (cfg.sim_threshold is not None or cfg.use_wh_filter):
        bare = RetrievalConfig(k=cfg.k, exclude_question_id=cfg.exclude_question_id)
        retrieved = retrieve(cb, qvec, wh, bare)
    if not retrieved:
        raise NoCaseError(f"question {question.id}: nothing retrievable from the casebase")
    cands = generate_candidates(passage, gazetteer)
    if not cands:
        raise NoCandidatesError(f"question {question.id}: passage {passage.id} has no candidates")
    cand_matrix = backend.encode_spans(passage, [(c.token_start, c.token_end) for c in cands])
    return predict_from_retrieved(question.id, passage, cands, cand_matrix, retrieved, sim, aggregation)


# --- prediction files ------------------------------------------------------------


def write_predictions(predictions: Sequence[Prediction], path: str) -> None:
    """One JSON object per line; field order is fixed for reproducible bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(
                json.dumps(
                    {
                        "qid": p.qid,
                        "passage_id": p.passage_id,
                        "answer": p.answer.text,
                        "char_span": [p.answer.char_start, p.answer.char_end],
                        "token_span": [p.answer.token_start, p.answer.token_end],
                        "aggregate": p.aggregate,
                        "provenance": [
                            {
                                "case_qid": cs.case_qid,
                                "answer_index": cs.answer_index,
                                "answer_text": cs.answer_text,
                                "score": cs.score,
                            }
                            for cs in p.provenance
                        ],
                        "per_case_predictions": [
                            {
                                "case_qid": qid,
                                "answer": cand.text,
                                "char_span": [cand.char_start, cand.char_end],
                                "token_span": [cand.token_start, cand.token_end],
                            }
                            for qid, cand in p.per_case_predictions
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_predictions(path: str) -> dict[str, dict]:
    """qid -> raw record; later duplicates of a qid win."""
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                out[rec["qid"]] = rec
    return out
