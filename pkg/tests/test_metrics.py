import pytest
from hypothesis import given
from hypothesis import strategies as st

from caseqa.metrics import (
    SUBSET_MULTI_MENTION,
    EvalResult,
    PredictedAnswer,
    evaluate,
    exact_match,
    has_multiple_mentions,
    normalize_answer,
    span_em,
    span_f1,
    token_f1,
)

from factories import make_case, make_dataset


# --- normalization ---------------------------------------------------------------


def test_normalize_examples():
    assert normalize_answer("The Telephone!") == "telephone"
    assert normalize_answer("A  Bell,  an idea") == "bell idea"
    assert normalize_answer("THE THE THE") == ""
    assert normalize_answer("don't") == "dont"
    assert normalize_answer("  spaced   out  ") == "spaced out"


@given(st.text(max_size=40))
def test_normalize_idempotent(text):
    once = normalize_answer(text)
    assert normalize_answer(once) == once


# --- exact match -------------------------------------------------------------------


def test_exact_match_articles_and_case():
    assert exact_match("the telephone", ["telephone"]) == 1.0
    assert exact_match("Telephone!", ["the telephone"]) == 1.0
    assert exact_match("telegraph", ["telephone"]) == 0.0


def test_exact_match_any_gold():
    assert exact_match("bell", ["watson", "Bell"]) == 1.0


def test_exact_match_empty_golds():
    with pytest.raises(ValueError):
        exact_match("x", [])


# --- token F1 ---------------------------------------------------------------------


def test_token_f1_partial_overlap():
    # 2 shared tokens; precision 2/2, recall 2/3
    assert token_f1("Graham Bell", ["Alexander Graham Bell"]) == pytest.approx(0.8, abs=1e-12)


def test_token_f1_max_over_golds():
    assert token_f1("Graham Bell", ["Alexander Graham Bell", "Graham Bell"]) == 1.0


def test_token_f1_duplicate_tokens_use_multiset():
    # only one of the repeated tokens finds a gold counterpart
    assert token_f1("bell bell", ["bell"]) == pytest.approx(2 * (1 / 2) * 1 / (1 / 2 + 1), abs=1e-12)


def test_token_f1_no_overlap():
    assert token_f1("watson", ["bell"]) == 0.0


def test_token_f1_both_normalize_empty():
    assert token_f1("the", ["an"]) == 1.0
    assert token_f1("the", ["bell"]) == 0.0


@given(
    st.text(alphabet="ab ", max_size=12),
    st.lists(st.text(alphabet="ab ", max_size=12), min_size=1, max_size=3),
)
def test_em_implies_f1(pred, golds):
    em = exact_match(pred, golds)
    f1 = token_f1(pred, golds)
    assert 0.0 <= em <= 1.0 and 0.0 <= f1 <= 1.0
    assert f1 >= em


def test_gold_order_invariance():
    golds = ["Alexander Graham Bell", "Bell", "the inventor Bell"]
    for pred in ("bell", "graham", "inventor"):
        assert token_f1(pred, golds) == token_f1(pred, list(reversed(golds)))
        assert exact_match(pred, golds) == exact_match(pred, list(reversed(golds)))


# --- span metrics -------------------------------------------------------------------


def test_span_em_distinguishes_occurrences():
    # same text at two offsets: only the matching occurrence counts
    assert span_em(("p", 10, 14), [("p", 10, 14)]) == 1.0
    assert span_em(("p", 30, 34), [("p", 10, 14)]) == 0.0
    assert span_em(("p", 30, 34), [("p", 10, 14), ("p", 30, 34)]) == 1.0


def test_span_f1_half_overlap():
    # 5 chars shared, both spans 10 long: precision = recall = 0.5
    assert span_f1(("p", 0, 10), [("p", 5, 15)]) == 0.5


def test_span_f1_exact_and_disjoint():
    assert span_f1(("p", 3, 7), [("p", 3, 7)]) == 1.0
    assert span_f1(("p", 0, 3), [("p", 3, 7)]) == 0.0


def test_span_f1_max_over_golds():
    assert span_f1(("p", 0, 4), [("p", 100, 104), ("p", 0, 4)]) == 1.0


def test_span_metrics_reject_cross_passage():
    with pytest.raises(ValueError):
        span_em(("p", 0, 4), [("other", 0, 4)])
    with pytest.raises(ValueError):
        span_f1(("p", 0, 4), [("other", 0, 4)])
    with pytest.raises(ValueError):
        span_em(("p", 0, 4), [])


@given(
    st.integers(0, 30),
    st.integers(1, 10),
    st.integers(0, 30),
    st.integers(1, 10),
)
def test_span_em_implies_span_f1(cs, ln, gcs, gln):
    pred = ("p", cs, cs + ln)
    golds = [("p", gcs, gcs + gln)]
    se = span_em(pred, golds)
    sf = span_f1(pred, golds)
    assert 0.0 <= sf <= 1.0
    if se == 1.0:
        assert sf == 1.0


# --- multi-mention subset --------------------------------------------------------


def test_has_multiple_mentions():
    twice = make_case("who rang ?", "bell rang and Bell rang again .", ["bell"], qid="m0")
    once = make_case("who rang ?", "bell rang once .", ["bell"], qid="m1")
    assert has_multiple_mentions(twice) is True
    assert has_multiple_mentions(once) is False


# --- evaluate ----------------------------------------------------------------------


def two_case_dataset():
    c0 = make_case("who invented it ?", "bell made the telephone .", ["bell"], qid="q0")
    c1 = make_case("what was made ?", "bell made the telephone .", ["telephone"], qid="q1")
    return make_dataset([c0, c1]), c0, c1


def pred_for(case, answer_index=0):
    a = case.answers[answer_index]
    return PredictedAnswer(a.text, a.char_start, a.char_end, case.passage.id)


def test_evaluate_all_correct():
    ds, c0, c1 = two_case_dataset()
    result, rows = evaluate({"q0": pred_for(c0), "q1": pred_for(c1)}, ds)
    assert result == EvalResult(n=2, missing=0, em=100.0, f1=100.0, span_em=100.0, span_f1=100.0, candidate_recall=1.0)
    assert all(not r.missing for r in rows)


def test_evaluate_half_right():
    ds, c0, c1 = two_case_dataset()
    wrong = PredictedAnswer("made", 5, 9, c1.passage.id)
    result, _ = evaluate({"q0": pred_for(c0), "q1": wrong}, ds)
    assert result.em == 50.0
    assert result.span_em == 50.0
    assert result.n == 2


def test_evaluate_missing_counts_as_zero():
    ds, c0, _ = two_case_dataset()
    result, rows = evaluate({"q0": pred_for(c0)}, ds)
    assert result.n == 2
    assert result.missing == 1
    assert result.em == 50.0
    missing_row = [r for r in rows if r.qid == "q1"][0]
    assert missing_row.missing is True
    assert (missing_row.em, missing_row.f1, missing_row.span_em, missing_row.span_f1) == (0, 0, 0, 0)


def test_evaluate_extra_predictions_ignored():
    ds, c0, c1 = two_case_dataset()
    preds = {"q0": pred_for(c0), "q1": pred_for(c1), "ghost": pred_for(c0)}
    result, rows = evaluate(preds, ds)
    assert result.n == 2
    assert {r.qid for r in rows} == {"q0", "q1"}


def test_evaluate_empty_subset():
    ds, _, _ = two_case_dataset()
    result, rows = evaluate({}, ds, subset=lambda case: False)
    assert result == EvalResult(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert rows == []


def test_evaluate_multi_mention_subset():
    twice = make_case("who rang ?", "bell rang and bell rang again .", ["bell"], qid="m0")
    once = make_case("who rang ?", "bell rang once .", ["bell"], qid="m1")
    ds = make_dataset([twice, once])
    # correct on the multi-mention case, wrong on the other: subset sees only m0
    result, rows = evaluate({"m0": pred_for(twice)}, ds, subset=SUBSET_MULTI_MENTION)
    assert result.n == 1
    assert [r.qid for r in rows] == ["m0"]
    assert result.em == 100.0


def test_evaluate_unknown_subset():
    ds, _, _ = two_case_dataset()
    with pytest.raises(ValueError):
        evaluate({}, ds, subset="everything")


def test_candidate_recall_counts_reachable_golds():
    reachable = make_case("who made it ?", "quorn made it .", ["quorn"], qid="r0")
    # 5-token gold exceeds the n-gram cap and matches no entity pattern
    unreachable = make_case("who made it ?", "ana bel cor dun eve", ["ana bel cor dun eve"], qid="r1")
    ds = make_dataset([reachable, unreachable])
    result, _ = evaluate({}, ds)
    assert result.candidate_recall == 0.5


def test_instance_f1_at_least_em(rng):
    ds, c0, c1 = two_case_dataset()
    preds = {
        "q0": PredictedAnswer("the bell", 0, 4, c0.passage.id),
        "q1": PredictedAnswer("telephone .", 14, 25, c1.passage.id),
    }
    _, rows = evaluate(preds, ds)
    for r in rows:
        assert r.f1 >= r.em
        assert r.span_f1 >= r.span_em
