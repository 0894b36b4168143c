import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import json

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

from caseqa.corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from caseqa.datafile import save_dataset

# Wordpieces cover the fixture texts only partially on purpose: words off
# this list become single [UNK] subwords, "telescope" splits in three.
VOCAB = [
    "[PAD]",
    "[UNK]",
    "[CLS]",
    "[SEP]",
    "[MASK]",
    "who",
    "invented",
    "wrote",
    "where",
    "is",
    "the",
    "te",
    "##les",
    "##cope",
    "quorax",
    "ballad",
    "castle",
    "was",
    "written",
    "by",
    "stands",
    "near",
    "of",
    "in",
    "a",
    "?",
    ".",
]

TRAIN_ROWS = [
    ("q-tel", "who invented the telescope ?", "galio invented the telescope in padua .", "telescope"),
    ("q-quo", "who invented the quorax ?", "marden invented the quorax in a shed .", "quorax"),
    ("q-bal", "who wrote the ballad ?", "the ballad was written by welkin long ago .", "welkin"),
    ("q-cas", "where is the castle ?", "the castle stands near the harbor of dunmore .", "dunmore"),
]

TEST_ROWS = [
    ("t-tel", "who invented the spyglass ?", "the spyglass was invented by oblix .", "oblix"),
    ("t-cas", "where is the abbey ?", "the abbey stands near faloria .", "faloria"),
]

TWIN_ROWS = [
    ("tw-a", "who invented the quorax ?", "marden invented the quorax .", "quorax"),
    ("tw-b", "who invented the veltrane ?", "sorel invented the veltrane .", "veltrane"),
]

TWIN_GAZETTEER = frozenset({"quorax", "veltrane"})


def build_case(qid: str, qtext: str, ptext: str, answer_word: str) -> Case:
    question = Question(qid, qtext, tokenize(qtext))
    passage = Passage(qid + "-p", ptext, tokenize(ptext))
    hits = [(i, t) for i, t in enumerate(passage.tokens) if t.text == answer_word]
    idx, tok = hits[0]
    answer = AnswerSpan(idx, idx + 1, tok.char_start, tok.char_end, tok.text)
    return Case(question=question, answers=(answer,), passage=passage)


def rows_to_dataset(rows, name: str) -> Dataset:
    return Dataset(name=name, cases=tuple(build_case(*row) for row in rows))


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory) -> str:
    """Local random-weight BERT small enough to run in every test."""
    out = tmp_path_factory.mktemp("tinybert")
    (out / "vocab.txt").write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(str(out / "vocab.txt"), do_lower_case=True)
    tokenizer.save_pretrained(str(out))
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=37,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(str(out))
    return str(out)


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    save_dataset(rows_to_dataset(TRAIN_ROWS, "train"), str(out / "train.jsonl"), include_candidates=True)
    save_dataset(rows_to_dataset(TEST_ROWS, "test"), str(out / "test.jsonl"), include_candidates=True)
    save_dataset(rows_to_dataset(TRAIN_ROWS, "bare"), str(out / "bare.jsonl"))
    save_dataset(
        rows_to_dataset(TWIN_ROWS, "twins"),
        str(out / "twins.jsonl"),
        gazetteer=TWIN_GAZETTEER,
    )

    # Hand-built misalignments: one answer beyond the model window, one
    # whose char range starts inside a wordpiece.
    long_text = " ".join(["filler"] * 80 + ["needle"])
    needle_start = len(long_text) - len("needle")
    lines = [
        {"format": "caseqa-dataset", "version": 1, "name": "exceptions"},
        {
            "qid": "x-long",
            "masked_question": "who holds the needle ?",
            "passage_id": "p-long",
            "passage": long_text,
            "answers": [
                {
                    "token_start": 80,
                    "token_end": 81,
                    "char_start": needle_start,
                    "char_end": len(long_text),
                    "text": "needle",
                }
            ],
        },
        {
            "qid": "x-mid",
            "masked_question": "what is cut ?",
            "passage_id": "p-mid",
            "passage": "telescope",
            "answers": [
                {"token_start": 0, "token_end": 1, "char_start": 3, "char_end": 9, "text": "escope"}
            ],
        },
    ]
    with open(out / "exceptions.jsonl", "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    return out


@pytest.fixture(scope="session")
def train_export(tiny_model, data_dir, tmp_path_factory) -> str:
    from embed_export import ExportJob, export

    out = tmp_path_factory.mktemp("exported") / "emb.json"
    export(ExportJob(dataset=str(data_dir / "train.jsonl"), model=tiny_model, out=str(out)))
    return str(out)
