import json

import pytest

from caseqa.datafile import DatasetFileError, load_dataset, save_dataset
from caseqa.spanner import generate_candidates
from caseqa.textproc import extract_wh_keyword, mask_with_rules

from factories import make_case, make_dataset


def sample_dataset():
    return make_dataset(
        [
            make_case(
                "who invented the telephone ?",
                "the telephone was invented by Graham Bell .",
                ["Graham Bell"],
                qid="q0",
            ),
            make_case("what is the capital of France ?", "Paris is the capital .", ["Paris"], qid="q1"),
        ],
        name="sample",
    )


def test_round_trip(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path))
    back = load_dataset(str(path))
    assert back.name == "sample"
    assert len(back.cases) == 2
    for a, b in zip(back.cases, ds.cases):
        assert a.question.id == b.question.id
        assert a.question.text == b.question.text
        assert a.passage.id == b.passage.id
        assert a.passage.text == b.passage.text
        assert [(x.token_start, x.token_end, x.char_start, x.char_end, x.text) for x in a.answers] == [
            (x.token_start, x.token_end, x.char_start, x.char_end, x.text) for x in b.answers
        ]


def test_save_deterministic(tmp_path):
    ds = sample_dataset()
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(ds, str(pa))
    save_dataset(ds, str(pb))
    assert pa.read_bytes() == pb.read_bytes()


def test_records_carry_masked_and_wh_fields(tmp_path):
    ds = sample_dataset()
    gaz = frozenset({"telephone"})
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path), gazetteer=gaz)
    lines = path.read_text(encoding="utf-8").splitlines()
    for line, case in zip(lines[1:], ds.cases):
        rec = json.loads(line)
        assert rec["masked_question"] == mask_with_rules(case.question, gaz).masked_text
        assert rec["wh"] == extract_wh_keyword(case.question)
    assert "[MASK]" in json.loads(lines[1])["masked_question"]


def test_candidates_flag(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path), include_candidates=True)
    lines = path.read_text(encoding="utf-8").splitlines()
    for line, case in zip(lines[1:], ds.cases):
        rec = json.loads(line)
        expected = generate_candidates(case.passage)
        assert len(rec["candidates"]) == len(expected)
        assert [(c["token_start"], c["token_end"]) for c in rec["candidates"]] == [
            (c.token_start, c.token_end) for c in expected
        ]
        for c in rec["candidates"]:
            assert case.passage.text[c["char_start"] : c["char_end"]] == c["text"]

    save_dataset(ds, str(path))
    assert "candidates" not in json.loads(path.read_text(encoding="utf-8").splitlines()[1])


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.jsonl"
    path.write_text(json.dumps({"format": "something-else"}) + "\n", encoding="utf-8")
    with pytest.raises(DatasetFileError, match="not a"):
        load_dataset(str(path))


def test_load_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DatasetFileError):
        load_dataset(str(path))


def test_load_reports_line_numbers(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[2] = '{"qid": "broken"'
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(DatasetFileError, match="line 3"):
        load_dataset(str(path))


def test_load_rejects_corrupt_offsets(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    rec = json.loads(lines[1])
    rec["answers"][0]["char_end"] -= 1
    lines[1] = json.dumps(rec, sort_keys=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(DatasetFileError, match="line 2"):
        load_dataset(str(path))


def test_load_skips_blank_lines(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "data.jsonl"
    save_dataset(ds, str(path))
    raw = path.read_text(encoding="utf-8").replace("\n", "\n\n")
    path.write_text(raw, encoding="utf-8")
    assert len(load_dataset(str(path)).cases) == 2


def test_header_without_name_falls_back_to_path(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text(json.dumps({"format": "caseqa-dataset", "version": 1}) + "\n", encoding="utf-8")
    assert load_dataset(str(path)).name == str(path)
