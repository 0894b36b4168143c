"""Candidate answer spans: entity-style mentions plus all n-grams up to 3 tokens."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Passage
from .textproc import (
    KIND_DATETIME,
    KIND_NAME,
    KIND_NUMBER,
    KIND_QUOTED,
    recognize_entities,
)

MAX_NGRAM = 3

SOURCE_NGRAM = "ngram"
_KIND_TO_SOURCE = {
    KIND_NAME: "entity",
    KIND_DATETIME: "datetime",
    KIND_NUMBER: "number",
    KIND_QUOTED: "quoted",
}


@dataclass(frozen=True)
class CandidateSpan:
    token_start: int
    token_end: int
    char_start: int
    char_end: int
    text: str
    sources: frozenset[str]

    @property
    def token_length(self) -> int:
        return self.token_end - self.token_start


def generate_candidates(
    passage: Passage, gazetteer: frozenset[str] = frozenset()
) -> tuple[CandidateSpan, ...]:
    """Every passage span that could be an answer, deduplicated by token offsets.

    Entity-style mentions carry no length cap; n-grams stop at 3. A span found
    both ways keeps the union of its sources. Ordered by (token_start, token_end).
    """
    tokens = passage.tokens
    found: dict[tuple[int, int], set[str]] = {}
    for mention in recognize_entities(tokens, passage.text, gazetteer):
        key = (mention.span.token_start, mention.span.token_end)
        found.setdefault(key, set()).add(_KIND_TO_SOURCE[mention.kind])
    T = len(tokens)
    for n in range(1, min(MAX_NGRAM, T) + 1):
        for i in range(T - n + 1):
            found.setdefault((i, i + n), set()).add(SOURCE_NGRAM)

    out = []
    for (ts, te), sources in sorted(found.items()):
        cs, ce = tokens[ts].char_start, tokens[te - 1].char_end
        out.append(CandidateSpan(ts, te, cs, ce, passage.text[cs:ce], frozenset(sources)))
    return tuple(out)


def count_candidates(token_count: int, extra_entity_spans: int = 0) -> int:
    """Closed-form size: sum of (T - n + 1) for n = 1..min(3, T), plus entity
    spans longer than 3 tokens that the n-gram sweep cannot produce."""
    total = sum(token_count - n + 1 for n in range(1, min(MAX_NGRAM, token_count) + 1))
    return total + extra_entity_spans
