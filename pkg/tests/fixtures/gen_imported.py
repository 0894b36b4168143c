"""Regenerate the imported-encoder fixtures under tests/fixtures/imported/.

The embedding file mirrors the default toy encoder over two tiny datasets, so
tests can check that the imported backend reproduces toy behaviour. Output is
deterministic; rerunning must leave every committed byte unchanged.

    python3 tests/fixtures/gen_imported.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from caseqa.corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from caseqa.datafile import save_dataset
from caseqa.encoder import (
    QUESTION_KIND,
    SPAN_KIND,
    ToyEncoder,
    init_toy_params,
    write_embedding_file,
)
from caseqa.spanner import generate_candidates
from caseqa.textproc import mask_with_rules

FINGERPRINT = "toy-mirror@fixture-1"

TRAIN_ROWS = [
    ("f-inv-tel", "who invented the telephone ?", "quorax invented the telephone .", "quorax"),
    ("f-inv-cam", "who invented the camera ?", "voxil invented the camera .", "voxil"),
    ("f-wr-bal", "who wrote the ballad ?", "welkin wrote the ballad .", "welkin"),
    ("f-loc-cas", "where is the castle of brumal ?", "the castle of brumal is in faloria .", "faloria"),
]

TEST_ROWS = [
    ("f-t-inv", "who invented the engine ?", "zembra invented the engine .", "zembra"),
    ("f-t-loc", "where is the tower of velm ?", "the tower of velm is in dunmore .", "dunmore"),
]


def build_case(qid: str, q_text: str, p_text: str, answer_text: str) -> Case:
    p_tokens = tokenize(p_text)
    passage = Passage(id=f"{qid}-p", text=p_text, tokens=p_tokens)
    for i, tok in enumerate(p_tokens):
        if tok.text == answer_text:
            answer = AnswerSpan(i, i + 1, tok.char_start, tok.char_end, answer_text)
            break
    else:
        raise SystemExit(f"answer {answer_text!r} is not a token of {p_text!r}")
    question = Question(id=qid, text=q_text, tokens=tokenize(q_text))
    return Case(question=question, answers=(answer,), passage=passage)


def generate(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    train = Dataset(name="fixture-train", cases=tuple(build_case(*row) for row in TRAIN_ROWS))
    test = Dataset(name="fixture-test", cases=tuple(build_case(*row) for row in TEST_ROWS))
    save_dataset(train, str(out_dir / "train.jsonl"))
    save_dataset(test, str(out_dir / "test.jsonl"))

    enc = ToyEncoder(init_toy_params())
    keys: list[tuple[str, str, int | None, int | None]] = []
    rows: list[np.ndarray] = []
    for ds in (train, test):
        for case in ds.cases:
            mq = mask_with_rules(case.question)
            keys.append((QUESTION_KIND, case.question.id, None, None))
            rows.append(enc.encode_question(mq))
    for ds in (train, test):
        for case in ds.cases:
            spans = {(c.token_start, c.token_end) for c in generate_candidates(case.passage)}
            spans.update((a.token_start, a.token_end) for a in case.answers)
            for ts, te in sorted(spans):
                keys.append((SPAN_KIND, case.passage.id, ts, te))
                rows.append(enc.encode_span(case.passage, ts, te))
    write_embedding_file(
        str(out_dir / "emb.json"), np.stack(rows), keys, extra={"fingerprint": FINGERPRINT}
    )


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent / "imported"
    generate(target)
    print(f"wrote fixtures to {target}")
