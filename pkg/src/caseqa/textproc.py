"""Entity mentions, question masking, and wh-keyword extraction.

Masking replaces every entity mention in a question with the literal [MASK]
token so that questions asking the same kind of thing about different
entities end up textually identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .corpus import MASK_TOKEN, AnswerSpan, Question, Token

WH_KEYWORDS = frozenset(
    ["who", "what", "when", "where", "which", "why", "how", "whose", "whom"]
)

KIND_QUOTED = "quoted"
KIND_DATETIME = "datetime"
KIND_NUMBER = "number"
KIND_NAME = "name"

_PRECEDENCE = {KIND_QUOTED: 0, KIND_DATETIME: 1, KIND_NUMBER: 2, KIND_NAME: 3}

_MONTHS = frozenset(
    "january february march april may june july august september october november december".split()
)
_WEEKDAYS = frozenset("monday tuesday wednesday thursday friday saturday sunday".split())
_CARDINALS = frozenset(
    "zero one two three four five six seven eight nine ten eleven twelve thirteen fourteen"
    " fifteen sixteen seventeen eighteen nineteen twenty thirty forty fifty sixty seventy"
    " eighty ninety hundred thousand million billion".split()
)

_NUMBER_RE = re.compile(r"[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?")
_YEAR_RE = re.compile(r"\d{4}")
_DAY_RE = re.compile(r"(\d{1,2})(?:st|nd|rd|th)?", re.IGNORECASE)

_OPEN_QUOTES = {'"': '"', "“": "”"}
_CLOSE_QUOTES = {'"', "”"}

_SENTENCE_END = {".", "!", "?"}


@dataclass(frozen=True)
class EntityMention:
    span: AnswerSpan
    kind: str


Recognizer = Callable[[Sequence[Token], str], tuple[EntityMention, ...]]


@dataclass(frozen=True)
class MaskedQuestion:
    question_id: str
    masked_text: str
    masked_tokens: tuple[Token, ...]
    mask_count: int


def recognize_entities(
    tokens: Sequence[Token], text: str, gazetteer: frozenset[str] = frozenset()
) -> tuple[EntityMention, ...]:
    """Find maximal non-overlapping mentions of four kinds.

    Rules, by precedence: quoted content > datetime strings > numbers > names.
    Names are runs of capitalized tokens (sentence-initial singletons excluded)
    plus gazetteer matches; the gazetteer holds lowercase surface forms, which
    may be multi-word.
    """
    raw: list[tuple[int, int, int, str]] = []  # (precedence, ts, te, kind)
    raw += [(_PRECEDENCE[KIND_QUOTED], ts, te, KIND_QUOTED) for ts, te in _quoted_spans(tokens)]
    raw += [(_PRECEDENCE[KIND_DATETIME], ts, te, KIND_DATETIME) for ts, te in _datetime_spans(tokens)]
    raw += [(_PRECEDENCE[KIND_NUMBER], ts, te, KIND_NUMBER) for ts, te in _number_spans(tokens)]
    raw += [(_PRECEDENCE[KIND_NAME], ts, te, KIND_NAME) for ts, te in _name_spans(tokens, gazetteer)]

    raw.sort(key=lambda m: (m[0], -(m[2] - m[1]), m[1]))
    chosen: list[tuple[int, int, str]] = []
    covered: set[int] = set()
    for _, ts, te, kind in raw:
        if any(i in covered for i in range(ts, te)):
            continue
        covered.update(range(ts, te))
        chosen.append((ts, te, kind))
    chosen.sort()
    mentions = []
    for ts, te, kind in chosen:
        cs, ce = tokens[ts].char_start, tokens[te - 1].char_end
        mentions.append(EntityMention(AnswerSpan(ts, te, cs, ce, text[cs:ce]), kind))
    return tuple(mentions)


def _quoted_spans(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    spans = []
    i = 0
    while i < len(tokens):
        opener = tokens[i].text
        if opener in _OPEN_QUOTES:
            closer = _OPEN_QUOTES[opener]
            for j in range(i + 1, len(tokens)):
                if tokens[j].text == closer:
                    if j > i + 1:
                        spans.append((i + 1, j))
                    i = j
                    break
        i += 1
    return spans


def _datetime_spans(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    marked = [False] * len(tokens)
    for i, tok in enumerate(tokens):
        low = tok.text.lower()
        if low in _MONTHS or low in _WEEKDAYS or _YEAR_RE.fullmatch(tok.text):
            marked[i] = True
    # day numbers attach to an adjacent month
    for i, tok in enumerate(tokens):
        if tok.text.lower() not in _MONTHS:
            continue
        for j in (i - 1, i + 1):
            if 0 <= j < len(tokens) and not marked[j]:
                m = _DAY_RE.fullmatch(tokens[j].text)
                if m and 1 <= int(m.group(1)) <= 31:
                    marked[j] = True
    spans = []
    i = 0
    while i < len(tokens):
        if marked[i]:
            j = i
            while j + 1 < len(tokens) and marked[j + 1]:
                j += 1
            spans.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return spans


def _number_spans(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    spans = []
    for i, tok in enumerate(tokens):
        if _NUMBER_RE.fullmatch(tok.text) or tok.text.lower() in _CARDINALS:
            spans.append((i, i + 1))
    return spans


def _is_capitalized(text: str) -> bool:
    return bool(text) and text[0].isalpha() and text[0].isupper()


def _sentence_starts(tokens: Sequence[Token]) -> set[int]:
    starts = {0}
    for i in range(1, len(tokens)):
        if tokens[i - 1].text in _SENTENCE_END:
            starts.add(i)
    return starts


def _name_spans(tokens: Sequence[Token], gazetteer: frozenset[str]) -> list[tuple[int, int]]:
    spans = []
    starts = _sentence_starts(tokens)
    i = 0
    while i < len(tokens):
        if _is_capitalized(tokens[i].text):
            j = i
            while j + 1 < len(tokens) and _is_capitalized(tokens[j + 1].text):
                j += 1
            # a lone capitalized token at a sentence start is just casing
            if not (j == i and i in starts):
                spans.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    if gazetteer:
        max_len = max(len(entry.split()) for entry in gazetteer)
        for i in range(len(tokens)):
            for n in range(min(max_len, len(tokens) - i), 0, -1):
                surface = " ".join(t.text.lower() for t in tokens[i : i + n])
                if surface in gazetteer:
                    spans.append((i, i + n))
                    break
    return spans


def mask_question(question: Question, mentions: Sequence[EntityMention]) -> MaskedQuestion:
    """Replace each mention with a single [MASK] token; text is the token join.

    Mentions must be sorted, non-overlapping, and inside the question.
    Masking an already-masked question again (its [MASK] tokens draw no
    mentions) reproduces it byte for byte.
    """
    prev_end = 0
    for m in mentions:
        if m.span.token_start < prev_end or m.span.token_end > len(question.tokens):
            raise ValueError(f"question {question.id}: mentions overlap or out of range")
        prev_end = m.span.token_end

    texts: list[str] = []
    idx = 0
    by_start = {m.span.token_start: m for m in mentions}
    while idx < len(question.tokens):
        mention = by_start.get(idx)
        if mention is not None:
            texts.append(MASK_TOKEN)
            idx = mention.span.token_end
        else:
            texts.append(question.tokens[idx].text)
            idx += 1

    masked_text = " ".join(texts)
    tokens = []
    pos = 0
    for t in texts:
        tokens.append(Token(t, pos, pos + len(t)))
        pos += len(t) + 1
    return MaskedQuestion(
        question_id=question.id,
        masked_text=masked_text,
        masked_tokens=tuple(tokens),
        mask_count=len(mentions),
    )


def extract_wh_keyword(question: Question) -> str | None:
    """Lowercased first wh word in token order, or None."""
    for tok in question.tokens:
        low = tok.text.lower()
        if low in WH_KEYWORDS:
            return low
    return None


def mask_with_rules(question: Question, gazetteer: frozenset[str] = frozenset()) -> MaskedQuestion:
    mentions = recognize_entities(question.tokens, question.text, gazetteer)
    return mask_question(question, mentions)
