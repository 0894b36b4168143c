"""Writer for the embedding interchange files caseqa's imported encoder reads.

Three siblings share the manifest's stem: the JSON manifest itself, a raw
row-major little-endian float32 matrix, and a tab-separated key file with
one line per row. Bytes are deterministic for a given (vectors, keys,
extra) triple.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

QUESTION_KIND = "question"
SPAN_KIND = "span"


def write_embedding_file(
    manifest_path: str,
    vectors: np.ndarray,
    keys: list[tuple[str, str, int | None, int | None]],
    extra: dict | None = None,
) -> None:
    path = Path(manifest_path)
    if vectors.ndim != 2 or len(keys) != vectors.shape[0]:
        raise ValueError("vectors must be 2-D with one key per row")
    vec_name = path.stem + ".f32"
    key_name = path.stem + ".keys.tsv"
    np.ascontiguousarray(vectors, dtype="<f4").tofile(path.parent / vec_name)
    lines = []
    for kind, ident, start, end in keys:
        if kind not in (QUESTION_KIND, SPAN_KIND):
            raise ValueError(f"bad key kind {kind!r}")
        s = "" if start is None else str(start)
        e = "" if end is None else str(end)
        lines.append(f"{kind}\t{ident}\t{s}\t{e}\n")
    (path.parent / key_name).write_text("".join(lines), encoding="utf-8")
    manifest = {
        "dim": int(vectors.shape[1]),
        "count": int(vectors.shape[0]),
        "dtype": "f32le",
        "vectors": vec_name,
        "keys": key_name,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")
