"""Span and question encoders plus the on-disk embedding formats.

Two backends share one duck-typed surface:

* ToyEncoder: a trainable hash-bucket embedding table. A token's vector mixes
  its own bucket row with the mean of its window neighbors' rows; spans are
  mean-pooled (unnormalized); questions are mean-pooled then L2-normalized.
* ImportedEncoder: read-only vectors produced elsewhere (e.g. by a transformer
  export), looked up by question id or (passage id, token span).

Embedding file format (the cross-tool contract): a JSON manifest
{"dim", "count", "dtype": "f32le", "vectors": <file>, "keys": <file>} next to
a row-major little-endian float32 matrix and a key file with one
kind<TAB>id<TAB>start<TAB>end line per row (start/end empty for questions).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Passage, Token
from .textproc import MaskedQuestion


class EmbeddingFormatError(ValueError):
    """Manifest, vector file, or key file does not match the documented format."""


class EmbeddingLookupError(KeyError):
    """A requested question or span key is not present in the imported vectors."""


@dataclass
class ToyEncoderParams:
    dim: int
    vocab_buckets: int
    context_window: int
    self_weight: float
    table: np.ndarray  # (vocab_buckets, dim) float64

    def __post_init__(self):
        if not (0.0 < self.self_weight <= 1.0):
            raise ValueError("self_weight must be in (0, 1]")
        if self.table.shape != (self.vocab_buckets, self.dim):
            raise ValueError("table shape does not match dims")


def init_toy_params(
    dim: int = 64,
    vocab_buckets: int = 2**15,
    context_window: int = 2,
    self_weight: float = 0.7,
    seed: int = 0,
) -> ToyEncoderParams:
    """Seeded uniform init in [-0.5/sqrt(dim), +0.5/sqrt(dim)]."""
    rng = np.random.default_rng(seed)
    bound = 0.5 / np.sqrt(dim)
    table = rng.uniform(-bound, bound, size=(vocab_buckets, dim))
    return ToyEncoderParams(dim, vocab_buckets, context_window, self_weight, table)


def token_bucket(text: str, vocab_buckets: int) -> int:
    """Stable across processes; never relies on Python's randomized hash."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_buckets


class ToyEncoder:
    trainable = True

    def __init__(self, params: ToyEncoderParams):
        self.params = params
        self._bucket_cache: dict[str, int] = {}

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def fingerprint(self) -> str:
        p = self.params
        h = hashlib.sha256()
        h.update(f"toy:{p.dim}:{p.vocab_buckets}:{p.context_window}:{p.self_weight!r}:".encode())
        h.update(np.ascontiguousarray(p.table, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]

    def buckets(self, tokens: tuple[Token, ...]) -> np.ndarray:
        out = np.empty(len(tokens), dtype=np.int64)
        for i, tok in enumerate(tokens):
            b = self._bucket_cache.get(tok.text)
            if b is None:
                b = token_bucket(tok.text, self.params.vocab_buckets)
                self._bucket_cache[tok.text] = b
            out[i] = b
        return out

    def contextual_token_vectors(self, tokens: tuple[Token, ...]) -> np.ndarray:
        """(T, dim) matrix: self_weight * own row + rest * window-mean row."""
        p = self.params
        rows = p.table[self.buckets(tokens)]
        T = len(tokens)
        if T == 0:
            return np.zeros((0, p.dim))
        if p.self_weight == 1.0 or T == 1 or p.context_window == 0:
            return p.self_weight * rows if p.self_weight != 1.0 else rows.copy()
        w = p.context_window
        csum = np.vstack([np.zeros((1, p.dim)), np.cumsum(rows, axis=0)])
        idx = np.arange(T)
        lo = np.maximum(idx - w, 0)
        hi = np.minimum(idx + w, T - 1)
        window_sum = csum[hi + 1] - csum[lo] - rows
        counts = (hi - lo).astype(np.float64)  # window size minus self
        out = p.self_weight * rows
        nonzero = counts > 0
        out[nonzero] += (1.0 - p.self_weight) * window_sum[nonzero] / counts[nonzero, None]
        return out

    def encode_passage_tokens(self, passage: Passage) -> np.ndarray:
        return self.contextual_token_vectors(passage.tokens)

    def encode_span(self, passage: Passage, token_start: int, token_end: int) -> np.ndarray:
        vecs = self.contextual_token_vectors(passage.tokens)
        return span_vector(vecs, token_start, token_end)

    def encode_spans(self, passage: Passage, spans: list[tuple[int, int]]) -> np.ndarray:
        """Batch form: contextualizes the passage once."""
        vecs = self.contextual_token_vectors(passage.tokens)
        return np.stack([span_vector(vecs, ts, te) for ts, te in spans]) if spans else np.zeros((0, self.dim))

    def encode_question(self, mq: MaskedQuestion) -> np.ndarray:
        if not mq.masked_tokens:
            raise ValueError(f"question {mq.question_id}: no tokens to encode")
        vecs = self.contextual_token_vectors(mq.masked_tokens)
        pooled = vecs.mean(axis=0)
        return _normalize_or_basis(pooled)


def span_vector(token_vectors: np.ndarray, token_start: int, token_end: int) -> np.ndarray:
    if not (0 <= token_start < token_end <= len(token_vectors)):
        raise ValueError(f"span ({token_start}, {token_end}) outside passage of {len(token_vectors)} tokens")
    return token_vectors[token_start:token_end].mean(axis=0)


def _normalize_or_basis(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        basis = np.zeros_like(vec)
        basis[0] = 1.0
        return basis
    return vec / norm


# --- embedding file format ---------------------------------------------------

QUESTION_KIND = "question"
SPAN_KIND = "span"


def write_embedding_file(
    manifest_path: str,
    vectors: np.ndarray,
    keys: list[tuple[str, str, int | None, int | None]],
    extra: dict | None = None,
) -> None:
    """Write manifest + f32le vector matrix + key lines; deterministic bytes."""
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


def read_embedding_file(manifest_path: str):
    """Return (manifest, float32 vectors, keys). Raises EmbeddingFormatError."""
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(f"{path}: unreadable manifest: {exc}") from exc
    for field_name in ("dim", "count", "dtype", "vectors", "keys"):
        if field_name not in manifest:
            raise EmbeddingFormatError(f"{path}: manifest missing {field_name!r}")
    if manifest["dtype"] != "f32le":
        raise EmbeddingFormatError(f"{path}: unsupported dtype {manifest['dtype']!r}")
    dim, count = int(manifest["dim"]), int(manifest["count"])
    vec_path = path.parent / manifest["vectors"]
    raw = np.fromfile(vec_path, dtype="<f4")
    if raw.size != dim * count:
        raise EmbeddingFormatError(
            f"{vec_path}: expected {dim * count} float32 values ({dim * count * 4} bytes), "
            f"found {raw.size} (byte offset {raw.size * 4})"
        )
    vectors = raw.reshape(count, dim)
    keys: list[tuple[str, str, int | None, int | None]] = []
    key_path = path.parent / manifest["keys"]
    with open(key_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4 or parts[0] not in (QUESTION_KIND, SPAN_KIND):
                raise EmbeddingFormatError(f"{key_path}:{line_no}: bad key line {line.rstrip()!r}")
            kind, ident, s, e = parts
            start = int(s) if s else None
            end = int(e) if e else None
            keys.append((kind, ident, start, end))
    if len(keys) != count:
        raise EmbeddingFormatError(f"{key_path}: {len(keys)} keys for {count} vectors")
    return manifest, vectors, keys


class ImportedEncoder:
    """Backend over exported vectors; all encode calls become lookups."""

    trainable = False

    def __init__(self, manifest_path: str):
        manifest, vectors, keys = read_embedding_file(manifest_path)
        self._manifest = manifest
        self._vectors = vectors
        self._questions: dict[str, int] = {}
        self._spans: dict[tuple[str, int, int], int] = {}
        for row, (kind, ident, start, end) in enumerate(keys):
            if kind == QUESTION_KIND:
                if ident in self._questions:
                    raise EmbeddingFormatError(f"duplicate question key {ident!r}")
                self._questions[ident] = row
            else:
                if start is None or end is None:
                    raise EmbeddingFormatError(f"span key {ident!r} lacks offsets")
                key = (ident, start, end)
                if key in self._spans:
                    raise EmbeddingFormatError(f"duplicate span key {key!r}")
                self._spans[key] = row

    @property
    def dim(self) -> int:
        return int(self._manifest["dim"])

    @property
    def fingerprint(self) -> str:
        fp = self._manifest.get("fingerprint")
        if fp:
            return str(fp)
        h = hashlib.sha256(json.dumps(self._manifest, sort_keys=True).encode())
        return h.hexdigest()[:16]

    def encode_question(self, mq: MaskedQuestion) -> np.ndarray:
        row = self._questions.get(mq.question_id)
        if row is None:
            raise EmbeddingLookupError(f"question {mq.question_id!r} not in imported vectors")
        return self._vectors[row].astype(np.float64)

    def encode_span(self, passage: Passage, token_start: int, token_end: int) -> np.ndarray:
        row = self._spans.get((passage.id, token_start, token_end))
        if row is None:
            raise EmbeddingLookupError(
                f"span ({passage.id!r}, {token_start}, {token_end}) not in imported vectors"
            )
        return self._vectors[row].astype(np.float64)

    def encode_spans(self, passage: Passage, spans: list[tuple[int, int]]) -> np.ndarray:
        if not spans:
            return np.zeros((0, self.dim))
        return np.stack([self.encode_span(passage, ts, te) for ts, te in spans])

    def encode_passage_tokens(self, passage: Passage) -> np.ndarray:
        raise NotImplementedError("imported vectors expose spans, not per-token states")


# --- toy checkpoint format ----------------------------------------------------


def save_params(params: ToyEncoderParams, manifest_path: str) -> None:
    """JSON manifest + sibling f32le table file; deterministic bytes."""
    path = Path(manifest_path)
    table_name = path.stem + ".f32"
    np.ascontiguousarray(params.table, dtype="<f4").tofile(path.parent / table_name)
    manifest = {
        "kind": "toy-encoder",
        "dim": params.dim,
        "vocab_buckets": params.vocab_buckets,
        "context_window": params.context_window,
        "self_weight": params.self_weight,
        "dtype": "f32le",
        "table": table_name,
    }
    path.write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")


def load_params(manifest_path: str) -> ToyEncoderParams:
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(f"{path}: unreadable checkpoint: {exc}") from exc
    if manifest.get("kind") != "toy-encoder" or manifest.get("dtype") != "f32le":
        raise EmbeddingFormatError(f"{path}: not a toy encoder checkpoint")
    dim = int(manifest["dim"])
    buckets = int(manifest["vocab_buckets"])
    raw = np.fromfile(path.parent / manifest["table"], dtype="<f4")
    if raw.size != dim * buckets:
        raise EmbeddingFormatError(
            f"{path}: table holds {raw.size} values, expected {dim * buckets}"
        )
    table = raw.reshape(buckets, dim).astype(np.float64)
    return ToyEncoderParams(
        dim=dim,
        vocab_buckets=buckets,
        context_window=int(manifest["context_window"]),
        self_weight=float(manifest["self_weight"]),
        table=table,
    )
