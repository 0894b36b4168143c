import numpy as np
import pytest

from caseqa.casebase import CaseEntry, RetrievalConfig, RetrievedCase, build
from caseqa.encoder import ToyEncoder, init_toy_params
from caseqa.reuse import (
    AGG_SOFTMAX,
    AGG_SUM,
    NoCandidatesError,
    NoCaseError,
    SIM_COSINE,
    SIM_DOT,
    _argmax_candidate,
    predict,
    predict_from_retrieved,
    read_predictions,
    score_against_case,
    score_candidates,
    write_predictions,
)
from caseqa.spanner import CandidateSpan

from factories import make_case, make_dataset, make_passage, make_question


def hand_entry(qid: str, answer_vecs) -> CaseEntry:
    texts = [f"ans{i}" for i in range(len(answer_vecs))]
    case = make_case(f"who did thing {qid} ?", " ".join(texts), texts, qid=qid)
    dim = len(answer_vecs[0])
    qvec = np.zeros(dim)
    qvec[0] = 1.0
    return CaseEntry(case, qvec, tuple(np.asarray(v, dtype=np.float64) for v in answer_vecs), "who")


def hand_candidates(n: int):
    """n single-token candidates over an n-token passage."""
    p = make_passage(" ".join("abcdefgh"[i] for i in range(n)))
    cands = tuple(
        CandidateSpan(i, i + 1, t.char_start, t.char_end, t.text, frozenset({"ngram"}))
        for i, t in enumerate(p.tokens)
    )
    return p, cands


# --- score_against_case ---------------------------------------------------------


def test_score_identity_is_norm_squared():
    v = np.array([1.5, -2.0, 0.5])
    entry = hand_entry("q0", [v])
    best, idx = score_against_case(v[None, :], entry)
    assert best[0] == pytest.approx(float(v @ v), abs=1e-12)
    assert idx[0] == 0


def test_score_picks_best_answer():
    entry = hand_entry("q0", [[1.2, 0.0], [3.4, 0.0]])
    best, idx = score_against_case(np.array([[1.0, 0.0]]), entry)
    assert best[0] == pytest.approx(3.4)
    assert idx[0] == 1


def test_score_zero_candidate():
    entry = hand_entry("q0", [[1.0, 2.0]])
    best, _ = score_against_case(np.zeros((1, 2)), entry)
    assert best[0] == 0.0
    best_cos, _ = score_against_case(np.zeros((1, 2)), entry, sim=SIM_COSINE)
    assert best_cos[0] == 0.0


def test_score_tie_takes_first_answer():
    entry = hand_entry("q0", [[1.0, 0.0], [1.0, 0.0]])
    _, idx = score_against_case(np.array([[2.0, 0.0]]), entry)
    assert idx[0] == 0


def test_cosine_similarity_value():
    entry = hand_entry("q0", [[1.0, 0.0]])
    best, _ = score_against_case(np.array([[1.0, 1.0]]), entry, sim=SIM_COSINE)
    assert best[0] == pytest.approx(1 / np.sqrt(2), abs=1e-12)


# --- score_candidates ------------------------------------------------------------


def brute_force_setup():
    _, cands = hand_candidates(3)
    cand_matrix = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    retrieved = [
        RetrievedCase(hand_entry("caseA", [[2.0, 0.0], [0.0, 3.0]]), 0.9),
        RetrievedCase(hand_entry("caseB", [[1.0, 1.0]]), 0.8),
    ]
    return cands, cand_matrix, retrieved


def test_hand_brute_force_aggregates():
    cands, cand_matrix, retrieved = brute_force_setup()
    scored = score_candidates(cands, cand_matrix, retrieved)
    assert [s.aggregate for s in scored] == [pytest.approx(x, abs=1e-9) for x in (3.0, 4.0, 5.0)]
    assert [cs.score for cs in scored[0].per_case] == [pytest.approx(2.0), pytest.approx(1.0)]
    assert [cs.answer_index for cs in scored[2].per_case] == [1, 0]
    assert scored[2].per_case[0].answer_text == "ans1"


def test_aggregate_is_sum_of_per_case(rng):
    _, cands = hand_candidates(6)
    cand_matrix = rng.normal(size=(6, 4))
    retrieved = [RetrievedCase(hand_entry(f"q{j}", rng.normal(size=(2, 4))), 0.5) for j in range(3)]
    for s in score_candidates(cands, cand_matrix, retrieved):
        assert s.aggregate == pytest.approx(sum(cs.score for cs in s.per_case), abs=1e-9)


def test_brute_force_oracle_random(rng):
    # full three-level loop oracle over candidates, cases, and answers
    for _ in range(20):
        n = int(rng.integers(1, 8))
        _, cands = hand_candidates(n)
        cand_matrix = rng.normal(size=(n, 3))
        retrieved = [
            RetrievedCase(hand_entry(f"q{j}", rng.normal(size=(int(rng.integers(1, 4)), 3))), 0.5)
            for j in range(int(rng.integers(1, 4)))
        ]
        scored = score_candidates(cands, cand_matrix, retrieved)
        for i in range(n):
            expected = 0.0
            for j, rc in enumerate(retrieved):
                dots = [float(av @ cand_matrix[i]) for av in rc.entry.answer_vecs]
                expected += max(dots)
                assert scored[i].per_case[j].score == pytest.approx(max(dots), abs=1e-9)
                assert scored[i].per_case[j].answer_index == int(np.argmax(dots))
            assert scored[i].aggregate == pytest.approx(expected, abs=1e-9)


def test_scaling_candidates_and_answers():
    cands, cand_matrix, retrieved = brute_force_setup()
    base = score_candidates(cands, cand_matrix, retrieved)
    c = 3.0
    scaled_cases = [
        RetrievedCase(
            hand_entry(rc.entry.qid, [c * np.asarray(v) for v in rc.entry.answer_vecs]), rc.score
        )
        for rc in retrieved
    ]
    scaled = score_candidates(cands, c * cand_matrix, scaled_cases)
    for a, b in zip(base, scaled):
        assert b.aggregate == pytest.approx(c * c * a.aggregate, rel=1e-12)
    assert np.argmax([s.aggregate for s in base]) == np.argmax([s.aggregate for s in scaled])


def test_no_candidates_and_no_case_errors():
    cands, cand_matrix, retrieved = brute_force_setup()
    with pytest.raises(NoCandidatesError):
        score_candidates((), np.zeros((0, 2)), retrieved)
    with pytest.raises(NoCaseError):
        score_candidates(cands, cand_matrix, [])
    with pytest.raises(ValueError):
        score_candidates(cands, cand_matrix, retrieved, sim="manhattan")
    with pytest.raises(ValueError):
        score_candidates(cands, cand_matrix, retrieved, aggregation="median")


def test_softmax_aggregation():
    cands, cand_matrix, retrieved = brute_force_setup()
    scored = score_candidates(cands, cand_matrix, retrieved, aggregation=AGG_SOFTMAX)
    # each case contributes a distribution over candidates
    assert sum(s.aggregate for s in scored) == pytest.approx(len(retrieved), abs=1e-9)
    single = score_candidates(cands, cand_matrix, retrieved[:1], aggregation=AGG_SOFTMAX)
    raw = score_candidates(cands, cand_matrix, retrieved[:1], aggregation=AGG_SUM)
    assert np.argmax([s.aggregate for s in single]) == np.argmax([s.aggregate for s in raw])


# --- prediction ---------------------------------------------------------------


def test_predict_from_retrieved_winner_and_provenance():
    cands, cand_matrix, retrieved = brute_force_setup()
    p, _ = hand_candidates(3)
    pred = predict_from_retrieved("probe", p, cands, cand_matrix, retrieved)
    assert pred.qid == "probe"
    assert pred.passage_id == p.id
    assert (pred.answer.token_start, pred.answer.token_end) == (2, 3)
    assert pred.aggregate == pytest.approx(5.0)
    assert [cs.case_qid for cs in pred.provenance] == ["caseA", "caseB"]
    for cs, rc in zip(pred.provenance, retrieved):
        assert 0 <= cs.answer_index < len(rc.entry.case.answers)
        assert cs.answer_text == rc.entry.case.answers[cs.answer_index].text
    # per-case winners: caseA ties c1/c2 at 3.0 so lower start wins; caseB picks c2
    assert [(qid, c.token_start) for qid, c in pred.per_case_predictions] == [
        ("caseA", 1),
        ("caseB", 2),
    ]


def test_k1_prediction_equals_per_case():
    cands, cand_matrix, retrieved = brute_force_setup()
    p, _ = hand_candidates(3)
    pred = predict_from_retrieved("probe", p, cands, cand_matrix, retrieved[:1])
    assert pred.per_case_predictions == ((retrieved[0].entry.qid, pred.answer),)


def test_argmax_tie_break():
    p = make_passage("a b c d e")
    t = p.tokens
    cands = [
        CandidateSpan(2, 4, t[2].char_start, t[3].char_end, "c d", frozenset({"ngram"})),
        CandidateSpan(1, 3, t[1].char_start, t[2].char_end, "b c", frozenset({"ngram"})),
        CandidateSpan(1, 2, t[1].char_start, t[1].char_end, "b", frozenset({"ngram"})),
    ]
    scores = np.array([1.0, 1.0, 1.0])
    win = _argmax_candidate(cands, scores)
    # lower token_start first, then shorter span
    assert (cands[win].token_start, cands[win].token_end) == (1, 2)


def test_affine_transform_after_aggregation_keeps_argmax(rng):
    _, cands = hand_candidates(7)
    cand_matrix = rng.normal(size=(7, 4))
    retrieved = [RetrievedCase(hand_entry(f"q{j}", rng.normal(size=(2, 4))), 0.5) for j in range(2)]
    scored = score_candidates(cands, cand_matrix, retrieved)
    totals = np.array([s.aggregate for s in scored])
    win = _argmax_candidate(cands, totals)
    for c, b in [(2.0, 0.0), (0.5, 10.0), (7.0, -3.0)]:
        assert _argmax_candidate(cands, c * totals + b) == win


# --- end-to-end predict -----------------------------------------------------------


def fixture_casebase():
    enc = ToyEncoder(init_toy_params(16, 512, 2, 0.7, seed=5))
    ds = make_dataset(
        [
            make_case(
                "who invented the telephone ?",
                "quorax invented the telephone .",
                ["quorax"],
                qid="inv0",
            ),
            make_case(
                "who wrote the ballad ?",
                "welkin wrote the ballad .",
                ["welkin"],
                qid="wr0",
            ),
        ]
    )
    return enc, build(ds, enc)


def test_predict_end_to_end_identical_context():
    enc, cb = fixture_casebase()
    q = make_question("who invented the telephone ?", "probe")
    p = make_passage("quorax invented the telephone .", "probe-p")
    pred = predict(q, p, cb, enc, RetrievalConfig(k=1))
    assert pred.answer.text == "quorax"
    assert pred.provenance[0].case_qid == "inv0"


def test_predict_fallback_relaxes_filters():
    enc, cb = fixture_casebase()
    q = make_question("where did quorax live ?", "probe")
    p = make_passage("quorax lived in arbel .", "probe-p")
    cfg = RetrievalConfig(k=1, sim_threshold=0.95, use_wh_filter=True)
    pred = predict(q, p, cb, enc, cfg, fallback=True)
    assert pred.answer.text
    with pytest.raises(NoCaseError):
        predict(q, p, cb, enc, cfg, fallback=False)


def test_predict_empty_casebase_raises():
    enc, cb = fixture_casebase()
    empty = build(make_dataset([], name="none"), enc)
    q = make_question("who invented the telephone ?", "probe")
    p = make_passage("quorax invented the telephone .", "probe-p")
    with pytest.raises(NoCaseError):
        predict(q, p, empty, enc, RetrievalConfig(k=1))


def test_predict_self_exclusion_changes_provenance():
    enc, cb = fixture_casebase()
    q = make_question("who invented the telephone ?", "inv0")
    p = make_passage("quorax invented the telephone .", "probe-p")
    pred = predict(q, p, cb, enc, RetrievalConfig(k=1, exclude_question_id="inv0"))
    assert pred.provenance[0].case_qid == "wr0"


# --- prediction files -------------------------------------------------------------


def test_write_read_predictions_round_trip(tmp_path):
    cands, cand_matrix, retrieved = brute_force_setup()
    p, _ = hand_candidates(3)
    pred = predict_from_retrieved("probe", p, cands, cand_matrix, retrieved)
    path = tmp_path / "preds.jsonl"
    write_predictions([pred], str(path))
    got = read_predictions(str(path))
    assert set(got) == {"probe"}
    rec = got["probe"]
    assert rec["answer"] == pred.answer.text
    assert rec["token_span"] == [pred.answer.token_start, pred.answer.token_end]
    assert rec["aggregate"] == pytest.approx(pred.aggregate)
    assert [x["case_qid"] for x in rec["provenance"]] == ["caseA", "caseB"]

    write_predictions([pred], str(path))
    assert read_predictions(str(path)) == got


def test_read_predictions_later_duplicate_wins(tmp_path):
    path = tmp_path / "preds.jsonl"
    lines = [
        '{"qid": "q0", "answer": "first"}',
        '{"qid": "q0", "answer": "second"}',
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert read_predictions(str(path))["q0"]["answer"] == "second"
