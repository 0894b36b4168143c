"""Map corpus character spans onto transformer subword positions.

A span aligns when a run of subwords sits fully inside its character
range and touches both ends exactly; interior whitespace belongs to no
subword and is fine. Special tokens carry the empty offset pair (0, 0)
and never participate.
"""

from __future__ import annotations

from collections.abc import Sequence


class AlignmentError(ValueError):
    pass


def align_span(char_start: int, char_end: int, offsets: Sequence[tuple[int, int]]) -> list[int]:
    """Indices of the subwords covering [char_start, char_end) exactly.

    Raises AlignmentError when the range holds no subword, when either
    boundary falls inside a subword (also the symptom of a span cut off
    by model-length truncation), or when the covering subwords are not
    contiguous.
    """
    if char_end <= char_start:
        raise AlignmentError(f"empty character range [{char_start}, {char_end})")
    rows = [
        i
        for i, (s, e) in enumerate(offsets)
        if e > s and s >= char_start and e <= char_end
    ]
    if not rows:
        raise AlignmentError(f"no subwords inside chars [{char_start}, {char_end})")
    first = min(offsets[i][0] for i in rows)
    last = max(offsets[i][1] for i in rows)
    if first != char_start:
        raise AlignmentError(f"no subword boundary at span start {char_start} (nearest {first})")
    if last != char_end:
        raise AlignmentError(f"no subword boundary at span end {char_end} (nearest {last})")
    if rows[-1] - rows[0] + 1 != len(rows):
        raise AlignmentError("subwords inside the span are not contiguous")
    return rows
