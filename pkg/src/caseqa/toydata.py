"""Synthetic relation corpus for end-to-end learning checks.

Five relations, each with two question templates and three context templates
over generated entity pairs. Entities are single capitalized pseudoword
tokens, unique both as strings and as hash buckets, so the toy encoder sees
every entity as an independent row and every template word as a shared one.

Held-out cases pair a training subject with a fresh object: the question and
passage are new, and answering them requires the alignment between answer
rows of the same relation that training induces. Untrained retrieval ties on
identical masked questions resolve to the first few casebase entries, so
held-out subjects are drawn from later training pairs and an untrained
encoder never sees a held-out answer row among its retrieved cases.

A sixth relation is generated separately for few-shot casebase augmentation.
Its context template shares no word with the main templates, so training
never touches any row involved in scoring its passages, and its additions
cycle a small set of subjects so that any top-5 retrieval over them contains
exactly one case per subject.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AnswerSpan, Case, Dataset, Passage, Question, tokenize
from .encoder import token_bucket


@dataclass(frozen=True)
class RelationSpec:
    name: str
    question_templates: tuple[str, ...]  # use {o}
    context_templates: tuple[str, ...]  # use {s} and {o}; answer is {s}


MAIN_RELATIONS: tuple[RelationSpec, ...] = (
    RelationSpec(
        name="inventor",
        question_templates=(
            "who invented the {o} ?",
            "who created the machine called {o} ?",
        ),
        context_templates=(
            "the {o} was invented by {s} after many experiments .",
            "records show that {s} invented the {o} last winter .",
            "people credit {s} with inventing the famous {o} .",
        ),
    ),
    RelationSpec(
        name="capital",
        question_templates=(
            "what is the capital of {o} ?",
            "which city serves as the capital of {o} ?",
        ),
        context_templates=(
            "the capital of {o} is the city of {s} .",
            "travelers reach {s} when visiting the capital of {o} .",
            "the government of {o} sits in central {s} .",
        ),
    ),
    RelationSpec(
        name="author",
        question_templates=(
            "who wrote the {o} ?",
            "who is the author of {o} ?",
        ),
        context_templates=(
            "the {o} was written by {s} over three years .",
            "critics say {s} wrote the {o} in secret .",
            "every copy of the {o} names {s} as author .",
        ),
    ),
    RelationSpec(
        name="discoverer",
        question_templates=(
            "who discovered the {o} ?",
            "who first observed the {o} ?",
        ),
        context_templates=(
            "the {o} was discovered by {s} during an expedition .",
            "journals record that {s} discovered the {o} accidentally .",
            "scientists honor {s} as discoverer of the {o} .",
        ),
    ),
    RelationSpec(
        name="founder",
        question_templates=(
            "who founded the {o} ?",
            "who established the company known as {o} ?",
        ),
        context_templates=(
            "the {o} was founded by {s} decades ago .",
            "old papers prove {s} founded the {o} alone .",
            "employees remember {s} as founder of the {o} .",
        ),
    ),
)

# No word of the few-shot context template appears in any main template, so
# training never touches a row that scores a few-shot passage; reuse there
# works through answer-row identity alone and is immune to trained row norms.
FEWSHOT_RELATION = RelationSpec(
    name="keeper",
    question_templates=("who kept the {o} safe ?",),
    context_templates=("this {o} stayed hidden inside {s} for ages",),
)


@dataclass(frozen=True)
class ToyCorpus:
    train: Dataset
    heldout: Dataset  # seen subjects in novel pairings, seen templates
    fewshot_additions: Dataset  # new relation, cases to augment the casebase with
    fewshot_test: Dataset  # same relation, subjects drawn from the additions

    @property
    def fewshot_subjects(self) -> tuple[str, ...]:
        seen: list[str] = []
        for case in self.fewshot_additions.cases:
            text = case.answers[0].text
            if text not in seen:
                seen.append(text)
        return tuple(seen)


_ONSETS = (
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
    "br", "dr", "gl", "kr", "pl", "tr", "vl", "zn",
)
_VOWELS = ("a", "e", "i", "o", "u", "au", "ei", "ou")
_CODAS = ("", "n", "x", "m", "rn", "lt", "sk")
_BLOCKED_SUBSTRINGS = ("rape", "nazi", "porn", "pedo", "dild")


def template_vocabulary(specs: tuple[RelationSpec, ...]) -> set[str]:
    words: set[str] = set()
    for spec in specs:
        for template in spec.question_templates + spec.context_templates:
            for word in template.split():
                if word not in ("{s}", "{o}"):
                    words.add(word)
    return words


def _new_entity(rng: np.random.Generator, used_lower: set[str], used_buckets: set[int], vocab_buckets: int) -> str:
    while True:
        n_syllables = 2 + int(rng.integers(0, 2))
        parts = [
            _ONSETS[int(rng.integers(len(_ONSETS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syllables)
        ]
        word = ("".join(parts) + _CODAS[int(rng.integers(len(_CODAS)))]).capitalize()
        if any(bad in word.lower() for bad in _BLOCKED_SUBSTRINGS):
            continue
        bucket = token_bucket(word, vocab_buckets)
        # keep entities disjoint from each other and from template rows
        if word.lower() in used_lower or bucket in used_buckets:
            continue
        used_lower.add(word.lower())
        used_buckets.add(bucket)
        return word


def _make_case(qid: str, question_template: str, context_template: str, subject: str, obj: str) -> Case:
    q_text = question_template.format(o=obj)
    p_text = context_template.format(s=subject, o=obj)
    p_tokens = tokenize(p_text)
    hits = [i for i, t in enumerate(p_tokens) if t.text == subject]
    if len(hits) != 1:
        raise ValueError(f"{qid}: subject {subject!r} occurs {len(hits)} times in {p_text!r}")
    i = hits[0]
    tok = p_tokens[i]
    answer = AnswerSpan(i, i + 1, tok.char_start, tok.char_end, tok.text)
    return Case(
        question=Question(id=qid, text=q_text, tokens=tokenize(q_text)),
        answers=(answer,),
        passage=Passage(id=f"{qid}-p", text=p_text, tokens=p_tokens),
    )


def build_toy_corpus(
    n_train_pairs: int = 100,
    n_heldout_pairs: int = 20,
    n_fewshot_additions: int = 32,
    n_fewshot_test: int = 20,
    n_fewshot_subjects: int = 5,
    seed: int = 7,
    vocab_buckets: int = 2**15,
) -> ToyCorpus:
    """Deterministic corpus: per relation, n_train_pairs training cases over
    fresh entity pairs, plus n_heldout_pairs held-out cases that pair the
    subject of training case 10+j with a fresh object. Templates cycle by
    pair index, so every held-out masked question matches some training ones
    exactly."""
    if n_train_pairs < 10 + n_heldout_pairs:
        raise ValueError("need n_train_pairs >= 10 + n_heldout_pairs for held-out subjects")
    rng = np.random.default_rng(seed)
    template_words = template_vocabulary(MAIN_RELATIONS + (FEWSHOT_RELATION,))
    used_buckets: dict[int, str] = {}
    for word in sorted(template_words) + ["[MASK]"]:
        b = token_bucket(word, vocab_buckets)
        if b in used_buckets:
            raise ValueError(f"template words {used_buckets[b]!r} and {word!r} share bucket {b}")
        used_buckets[b] = word
    bucket_set = set(used_buckets)
    used_lower = {w.lower() for w in template_words}

    def entity() -> str:
        return _new_entity(rng, used_lower, bucket_set, vocab_buckets)

    train: list[Case] = []
    heldout: list[Case] = []
    for spec in MAIN_RELATIONS:
        subjects_used: list[str] = []
        for i in range(n_train_pairs):
            subject, obj = entity(), entity()
            subjects_used.append(subject)
            qt = spec.question_templates[i % len(spec.question_templates)]
            ct = spec.context_templates[i % len(spec.context_templates)]
            train.append(_make_case(f"{spec.name}-{i:04d}", qt, ct, subject, obj))
        for j in range(n_heldout_pairs):
            subject, obj = subjects_used[10 + j], entity()
            qt = spec.question_templates[j % len(spec.question_templates)]
            ct = spec.context_templates[j % len(spec.context_templates)]
            heldout.append(_make_case(f"{spec.name}-h{j:04d}", qt, ct, subject, obj))

    spec = FEWSHOT_RELATION
    subjects = [entity() for _ in range(n_fewshot_subjects)]
    additions = [
        _make_case(
            f"{spec.name}-a{i:04d}",
            spec.question_templates[0],
            spec.context_templates[0],
            subjects[i % n_fewshot_subjects],
            entity(),
        )
        for i in range(n_fewshot_additions)
    ]
    fewshot_test = [
        _make_case(
            f"{spec.name}-t{j:04d}",
            spec.question_templates[0],
            spec.context_templates[0],
            subjects[j % n_fewshot_subjects],
            entity(),
        )
        for j in range(n_fewshot_test)
    ]

    return ToyCorpus(
        train=Dataset(name="toy-train", cases=tuple(train)),
        heldout=Dataset(name="toy-heldout", cases=tuple(heldout)),
        fewshot_additions=Dataset(name="toy-fewshot-additions", cases=tuple(additions)),
        fewshot_test=Dataset(name="toy-fewshot-test", cases=tuple(fewshot_test)),
    )
