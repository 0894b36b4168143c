"""Internal dataset file: header line plus one JSON record per case.

Each record carries the question, its pre-masked form and wh keyword, the
passage, gold answer offsets, and optionally the candidate spans. The masked
and candidate fields exist for external consumers (such as embedding
exporters) so they never have to re-run masking or span generation; this
package recomputes both from its own rules, keyed on the flags of the
running command.
"""

from __future__ import annotations

import json

from .corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from .spanner import generate_candidates
from .textproc import extract_wh_keyword, mask_with_rules

FORMAT = "caseqa-dataset"
VERSION = 1


class DatasetFileError(ValueError):
    pass


def _span_dict(a) -> dict:
    return {
        "token_start": a.token_start,
        "token_end": a.token_end,
        "char_start": a.char_start,
        "char_end": a.char_end,
        "text": a.text,
    }


def save_dataset(
    dataset: Dataset,
    path: str,
    gazetteer: frozenset[str] = frozenset(),
    include_candidates: bool = False,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": FORMAT, "version": VERSION, "name": dataset.name}, sort_keys=True) + "\n")
        for case in dataset.cases:
            mq = mask_with_rules(case.question, gazetteer)
            record = {
                "qid": case.question.id,
                "question": case.question.text,
                "wh": extract_wh_keyword(case.question),
                "masked_question": mq.masked_text,
                "passage_id": case.passage.id,
                "passage": case.passage.text,
                "answers": [_span_dict(a) for a in case.answers],
            }
            if include_candidates:
                record["candidates"] = [_span_dict(c) for c in generate_candidates(case.passage, gazetteer)]
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path: str) -> Dataset:
    """Rebuild cases from a saved file; tokenization and span checks re-run."""
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line) if header_line.strip() else {}
        except json.JSONDecodeError as exc:
            raise DatasetFileError(f"{path}: unreadable header: {exc}") from exc
        if header.get("format") != FORMAT:
            raise DatasetFileError(f"{path}: not a {FORMAT} file")
        cases: list[Case] = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                question = Question(rec["qid"], rec["question"], tokenize(rec["question"]))
                passage = Passage(rec["passage_id"], rec["passage"], tokenize(rec["passage"]))
                answers = tuple(
                    AnswerSpan(a["token_start"], a["token_end"], a["char_start"], a["char_end"], a["text"])
                    for a in rec["answers"]
                )
                cases.append(Case(question=question, answers=answers, passage=passage))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFileError(f"{path}: line {line_no}: {exc}") from exc
    return Dataset(name=str(header.get("name", path)), cases=tuple(cases))
