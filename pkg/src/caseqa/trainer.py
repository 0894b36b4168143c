"""Contrastive training of the toy encoder against retrieved cases.

Per training instance, the loss pulls the instance's gold spans toward the
retrieved cases' stored answer vectors and pushes every other candidate span
away: with m(s) = best similarity between span s and any retrieved answer,

    loss = logsumexp over all spans of m(s)/tau
         - logsumexp over gold spans of m(s)/tau

where "all spans" is the union of the passage candidates and the gold spans,
deduplicated by token offsets. Retrieved answer vectors come from the
casebase and are refreshed only at epoch boundaries, so within a step they
are constants and the gradient flows only through the instance-side span
encodings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import casebase as casebase_mod
from .casebase import Casebase, CaseEntry, RetrievalConfig, retrieve
from .corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from .encoder import ToyEncoder, ToyEncoderParams, init_toy_params
from .reuse import SIM_COSINE, SIM_DOT
from .spanner import generate_candidates


@dataclass
class TrainConfig:
    tau: float = 0.1
    k: int = 5
    sim_threshold: float | None = 0.95
    use_wh_filter: bool = True
    lr: float = 0.05
    epochs: int = 10
    seed: int = 0
    grad_clip: float | None = None
    sim: str = SIM_DOT


@dataclass(frozen=True)
class LossReport:
    value: float
    positive_term: float
    partition_term: float
    n_positives: int
    n_candidates: int
    skipped: bool = False


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    skipped: int
    instances: int


@dataclass
class TrainResult:
    params: ToyEncoderParams
    trace: list[EpochStats] = field(default_factory=list)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def loss_from_sims(pos_sims: np.ndarray, all_sims: np.ndarray, tau: float) -> tuple[float, float, float]:
    """Core reduction: (value, positive_term, partition_term).

    pos_sims must be a subset of all_sims; both are per-span best similarities.
    Stable for similarities up to +-1e4/tau.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if len(pos_sims) == 0 or len(all_sims) == 0:
        raise ValueError("empty similarity lists")
    positive = _logsumexp(np.asarray(pos_sims, dtype=np.float64) / tau)
    partition = _logsumexp(np.asarray(all_sims, dtype=np.float64) / tau)
    return partition - positive, positive, partition


def _instance_spans(case: Case, gazetteer: frozenset[str]) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Candidate spans united with gold spans, deduped by offsets, plus gold mask."""
    spans = [(c.token_start, c.token_end) for c in generate_candidates(case.passage, gazetteer)]
    present = set(spans)
    gold = {(a.token_start, a.token_end) for a in case.answers}
    for g in sorted(gold):
        if g not in present:
            spans.append(g)
            present.add(g)
    mask = np.array([s in gold for s in spans], dtype=bool)
    return spans, mask


def _stack_answers(retrieved: list[CaseEntry]) -> np.ndarray:
    rows = [vec for entry in retrieved for vec in entry.answer_vecs]
    return np.stack(rows)


def _best_sims(answer_matrix: np.ndarray, span_matrix: np.ndarray, sim: str):
    """Per-span best similarity and the first answer row attaining it."""
    if sim == SIM_DOT:
        sims = answer_matrix @ span_matrix.T
    elif sim == SIM_COSINE:
        a_norm = np.linalg.norm(answer_matrix, axis=1, keepdims=True)
        s_norm = np.linalg.norm(span_matrix, axis=1, keepdims=True)
        a = np.divide(answer_matrix, a_norm, out=np.zeros_like(answer_matrix), where=a_norm > 0)
        s = np.divide(span_matrix, s_norm, out=np.zeros_like(span_matrix), where=s_norm > 0)
        sims = a @ s.T
    else:
        raise ValueError(f"unknown similarity {sim!r}")
    best_rows = np.argmax(sims, axis=0)
    best = sims[best_rows, np.arange(sims.shape[1])]
    return best, best_rows


def compute_loss(
    case: Case,
    retrieved: list[CaseEntry],
    params: ToyEncoderParams,
    tau: float = 0.1,
    sim: str = SIM_DOT,
    gazetteer: frozenset[str] = frozenset(),
) -> LossReport:
    report, _ = compute_loss_and_gradient(case, retrieved, params, tau, sim, gazetteer, want_gradient=False)
    return report


def compute_loss_and_gradient(
    case: Case,
    retrieved: list[CaseEntry],
    params: ToyEncoderParams,
    tau: float = 1.0,
    sim: str = SIM_DOT,
    gazetteer: frozenset[str] = frozenset(),
    want_gradient: bool = True,
) -> tuple[LossReport, dict[int, np.ndarray]]:
    """Loss plus sparse gradient over embedding-table rows.

    When every span is gold the loss and gradient are exactly zero. Ties in
    the per-span max take the first attaining answer row.
    """
    n_gold = len({(a.token_start, a.token_end) for a in case.answers})
    if not retrieved:
        return LossReport(0.0, 0.0, 0.0, n_gold, 0, skipped=True), {}
    encoder = ToyEncoder(params)
    spans, gold_mask = _instance_spans(case, gazetteer)
    token_vecs = encoder.contextual_token_vectors(case.passage.tokens)
    span_matrix = np.stack([token_vecs[ts:te].mean(axis=0) for ts, te in spans])
    answer_matrix = _stack_answers(retrieved)
    best, best_rows = _best_sims(answer_matrix, span_matrix, sim)

    x = best / tau
    value, positive, partition = loss_from_sims(best[gold_mask], best, tau)
    report = LossReport(value, positive, partition, int(gold_mask.sum()), len(spans))
    if not want_gradient:
        return report, {}

    p_all = np.exp(x - partition)
    weights = p_all.copy()
    weights[gold_mask] -= np.exp(x[gold_mask] - positive)

    grad: dict[int, np.ndarray] = {}
    buckets = encoder.buckets(case.passage.tokens)
    T = len(case.passage.tokens)
    alpha = params.self_weight
    w = params.context_window
    for s_idx, (ts, te) in enumerate(spans):
        w_s = weights[s_idx]
        if w_s == 0.0:
            continue
        a_row = answer_matrix[best_rows[s_idx]]
        if sim == SIM_DOT:
            g_vec = (w_s / tau) * a_row
        else:
            v = span_matrix[s_idx]
            v_norm = float(np.linalg.norm(v))
            a_norm = float(np.linalg.norm(a_row))
            if v_norm == 0.0 or a_norm == 0.0:
                continue  # similarity pinned at 0; subgradient choice: no update
            a_hat = a_row / a_norm
            g_vec = (w_s / tau) * (a_hat / v_norm - best[s_idx] * v / (v_norm * v_norm))
        length = te - ts
        for i in range(ts, te):
            c = 1.0 / length
            _accumulate(grad, int(buckets[i]), alpha * c, g_vec)
            lo = max(0, i - w)
            hi = min(T - 1, i + w)
            cnt = hi - lo  # window members excluding self
            if cnt > 0 and alpha < 1.0:
                cw = (1.0 - alpha) * c / cnt
                for j in range(lo, hi + 1):
                    if j != i:
                        _accumulate(grad, int(buckets[j]), cw, g_vec)
    return report, grad


def _accumulate(grad: dict[int, np.ndarray], row: int, coef: float, vec: np.ndarray) -> None:
    acc = grad.get(row)
    if acc is None:
        grad[row] = coef * vec
    else:
        acc += coef * vec


def _grad_norm(grad: dict[int, np.ndarray]) -> float:
    if not grad:
        return 0.0
    return float(np.sqrt(sum(float(np.dot(g, g)) for g in grad.values())))


def train(
    dataset: Dataset,
    cb: Casebase,
    params: ToyEncoderParams,
    cfg: TrainConfig,
    gazetteer: frozenset[str] = frozenset(),
) -> TrainResult:
    """Plain SGD over per-instance losses, mutating params.table in place.

    The casebase passed in must have been built from `dataset` with `params`;
    its embeddings (and the retrieval pool) are recomputed from the current
    table at each epoch boundary, never mid-epoch. Instances whose retrieval
    comes back empty are skipped and contribute 0 to the epoch mean.
    """
    if not dataset.cases:
        raise ValueError("empty dataset")
    encoder = ToyEncoder(params)
    if cb.encoder_fingerprint != encoder.fingerprint:
        raise ValueError("casebase was not built with the given params")
    if {e.qid for e in cb.entries} != {c.question.id for c in dataset.cases}:
        raise ValueError("casebase does not cover the training dataset")

    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(params=params)
    n = len(dataset.cases)
    for epoch in range(cfg.epochs):
        epoch_cb = casebase_mod.build(dataset, encoder, gazetteer)
        qid_to_idx = epoch_cb.index_by_qid()
        order = rng.permutation(n)
        total = 0.0
        skipped = 0
        for pos in order:
            case = dataset.cases[int(pos)]
            entry = epoch_cb.entries[qid_to_idx[case.question.id]]
            r_cfg = RetrievalConfig(
                k=cfg.k,
                sim_threshold=cfg.sim_threshold,
                use_wh_filter=cfg.use_wh_filter,
                exclude_question_id=case.question.id,
            )
            retrieved = retrieve(epoch_cb, entry.question_vec, entry.wh, r_cfg)
            if not retrieved:
                skipped += 1
                continue
            report, grad = compute_loss_and_gradient(
                case, [rc.entry for rc in retrieved], params, cfg.tau, cfg.sim, gazetteer
            )
            total += report.value
            if cfg.grad_clip is not None:
                norm = _grad_norm(grad)
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    for g in grad.values():
                        g *= scale
            if cfg.lr != 0.0:
                for row, g in grad.items():
                    params.table[row] -= cfg.lr * g
        result.trace.append(EpochStats(epoch=epoch, mean_loss=total / n, skipped=skipped, instances=n))
    return result


@dataclass(frozen=True)
class FDReport:
    max_rel_error: float
    entries_checked: int
    instances: int
    zero_gradient_instances: int


def finite_difference_check(
    n_instances: int = 20,
    dim: int = 4,
    seed: int = 0,
    eps: float = 1e-4,
    tau: float = 1.0,
    sim: str = SIM_DOT,
    max_tokens: int = 10,
) -> FDReport:
    """Compare the analytic gradient to central differences on random instances.

    Perturbs individual embedding-table entries; retrieved answer vectors stay
    fixed, matching their role as epoch constants. Relative error is taken
    over entries whose analytic value exceeds 1e-8 in magnitude.
    """
    rng = np.random.default_rng(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    max_err = 0.0
    checked = 0
    zero_grad = 0
    for inst in range(n_instances):
        params = init_toy_params(
            dim=dim,
            vocab_buckets=64,
            context_window=int(rng.integers(0, 3)),
            self_weight=float(rng.choice([0.5, 0.7, 1.0])),
            seed=int(rng.integers(0, 2**31)),
        )
        T = int(rng.integers(2, max_tokens + 1))
        words = ["".join(rng.choice(list(letters), size=int(rng.integers(1, 4)))) for _ in range(T)]
        text = " ".join(words)
        passage = Passage(f"p{inst}", text, tokenize(text))
        n_ans = int(rng.integers(1, 3))
        starts = rng.choice(T, size=min(n_ans, T), replace=False)
        answers = []
        seen = set()
        for s in sorted(int(v) for v in starts):
            e = min(T, s + int(rng.integers(1, 3)))
            if (s, e) in seen:
                continue
            seen.add((s, e))
            cs, ce = passage.tokens[s].char_start, passage.tokens[e - 1].char_end
            answers.append(AnswerSpan(s, e, cs, ce, text[cs:ce]))
        question = Question(f"q{inst}", "who is it ?", tokenize("who is it ?"))
        case = Case(question=question, answers=tuple(answers), passage=passage)

        retrieved = []
        for c_idx in range(int(rng.integers(1, 4))):
            m = int(rng.integers(1, 4))
            ptxt = " ".join(letters[j] for j in range(m))
            p = Passage(f"rp{inst}_{c_idx}", ptxt, tokenize(ptxt))
            spans = tuple(
                AnswerSpan(j, j + 1, p.tokens[j].char_start, p.tokens[j].char_end, p.tokens[j].text)
                for j in range(m)
            )
            q = Question(f"rq{inst}_{c_idx}", "who is it ?", tokenize("who is it ?"))
            vecs = rng.normal(size=(m, dim))
            vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
            retrieved.append(
                CaseEntry(
                    Case(question=q, answers=spans, passage=p),
                    question_vec=np.eye(dim)[0],
                    answer_vecs=tuple(vecs),
                    wh="who",
                )
            )

        _, grad = compute_loss_and_gradient(case, retrieved, params, tau, sim)
        if not grad:
            zero_grad += 1
            continue
        for row, g_row in grad.items():
            for comp in range(dim):
                orig = params.table[row, comp]
                params.table[row, comp] = orig + eps
                up = compute_loss(case, retrieved, params, tau, sim).value
                params.table[row, comp] = orig - eps
                down = compute_loss(case, retrieved, params, tau, sim).value
                params.table[row, comp] = orig
                fd = (up - down) / (2 * eps)
                a = float(g_row[comp])
                if abs(a) > 1e-8:
                    rel = abs(a - fd) / max(abs(a), abs(fd))
                    max_err = max(max_err, rel)
                    checked += 1
    return FDReport(
        max_rel_error=max_err,
        entries_checked=checked,
        instances=n_instances,
        zero_gradient_instances=zero_grad,
    )
