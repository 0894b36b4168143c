"""Lexical-diversity analysis over masked-question similarity clusters.

Pipeline: encode masked training questions, keep each question's top
neighbors above a similarity floor, agglomerate the symmetric closure of
that sparse graph, cut the dendrogram at k-means-chosen thresholds into
flat clusterings of increasing tightness, score each cluster by unique
passage tokens per member, assign test questions to clusters via their
nearest training question, and report per-diversity-bucket F1 for one or
more systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Case, Dataset
from .encoder import _normalize_or_basis
from .textproc import mask_with_rules

DEFAULT_MAX_NEIGHBORS = 20
DEFAULT_MIN_SIM = 0.9
DEFAULT_CUTS = 6
DEFAULT_BUCKETS = 8

LINKAGE_AVERAGE = "average"
LINKAGE_SINGLE = "single"
LINKAGE_COMPLETE = "complete"
LINKAGES = (LINKAGE_AVERAGE, LINKAGE_SINGLE, LINKAGE_COMPLETE)


@dataclass
class QuestionEncodings:
    qids: list[str]
    matrix: np.ndarray  # (n, dim), rows unit norm


def encode_masked_questions(
    dataset: Dataset, backend, gazetteer: frozenset[str] = frozenset()
) -> QuestionEncodings:
    qids = [c.question.id for c in dataset.cases]
    rows = [
        _normalize_or_basis(
            np.asarray(backend.encode_question(mask_with_rules(c.question, gazetteer)), dtype=np.float64)
        )
        for c in dataset.cases
    ]
    matrix = np.stack(rows) if rows else np.zeros((0, backend.dim))
    return QuestionEncodings(qids=qids, matrix=matrix)


@dataclass
class SimilarityGraph:
    """Per-question top neighbors at or above the floor.

    `neighbors[i]` is node i's own descending top list (capped at
    max_neighbors); the union over directions forms the undirected edge set
    used downstream.
    """

    qids: list[str]
    neighbors: dict[int, list[tuple[int, float]]]
    max_neighbors: int
    min_sim: float

    def undirected_edges(self) -> dict[tuple[int, int], float]:
        edges: dict[tuple[int, int], float] = {}
        for i, lst in self.neighbors.items():
            for j, s in lst:
                key = (i, j) if i < j else (j, i)
                edges[key] = s
        return edges


def build_similarity_graph(
    encodings: QuestionEncodings,
    max_neighbors: int = DEFAULT_MAX_NEIGHBORS,
    min_sim: float = DEFAULT_MIN_SIM,
) -> SimilarityGraph:
    m = encodings.matrix
    n = m.shape[0]
    neighbors: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    if n >= 2:
        sims = m @ m.T
        for i in range(n):
            row = sims[i].copy()
            row[i] = -np.inf
            order = np.argsort(-row, kind="stable")[:max_neighbors]
            for j in order:
                s = float(row[j])
                if s < min_sim:
                    break
                neighbors[i].append((int(j), s))
    return SimilarityGraph(
        qids=list(encodings.qids), neighbors=neighbors, max_neighbors=max_neighbors, min_sim=min_sim
    )


@dataclass(frozen=True)
class Merge:
    left: int  # cluster ids; leaves are 0..n-1, merges mint n, n+1, ...
    right: int
    sim: float
    new_id: int
    size: int


@dataclass
class Dendrogram:
    qids: list[str]
    merges: list[Merge]


@dataclass
class _CrossStats:
    # aggregate of the leaf-pair similarities present as edges between two clusters
    total: float = 0.0
    count: int = 0
    mn: float = float("inf")
    mx: float = float("-inf")

    def add(self, other: _CrossStats) -> None:
        self.total += other.total
        self.count += other.count
        self.mn = min(self.mn, other.mn)
        self.mx = max(self.mx, other.mx)

    def linkage_sim(self, linkage: str, pair_capacity: int) -> float:
        # absent leaf pairs count as similarity 0
        if linkage == LINKAGE_AVERAGE:
            return self.total / pair_capacity
        if linkage == LINKAGE_SINGLE:
            return self.mn if self.count == pair_capacity else 0.0
        if linkage == LINKAGE_COMPLETE:
            return self.mx if self.count > 0 else 0.0
        raise ValueError(f"unknown linkage: {linkage!r}")


def hac(graph: SimilarityGraph, linkage: str = LINKAGE_AVERAGE) -> Dendrogram:
    """Agglomeration over the symmetric closure of the sparse graph.

    Absent edges count as similarity 0, so disconnected components still merge
    (at 0) into a single tree. Merge similarities never increase. Ties pick
    the smallest (left id, right id) pair.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage: {linkage!r}")
    n = len(graph.qids)
    merges: list[Merge] = []
    if n == 0:
        return Dendrogram(qids=[], merges=merges)
    active: dict[int, int] = {i: 1 for i in range(n)}  # id -> size
    cross: dict[tuple[int, int], _CrossStats] = {}
    for (i, j), s in graph.undirected_edges().items():
        cross[(i, j)] = _CrossStats(total=s, count=1, mn=s, mx=s)
    next_id = n
    while len(active) > 1:
        best_pair = None
        best_sim = 0.0
        for (a, b), stats in cross.items():
            s = stats.linkage_sim(linkage, active[a] * active[b])
            if s > best_sim or (s == best_sim and best_pair is not None and (a, b) < best_pair):
                best_sim = s
                best_pair = (a, b)
        if best_pair is None:
            # no positive linkage remains; merge the smallest ids at 0
            ids = sorted(active)
            best_pair = (ids[0], ids[1])
            best_sim = 0.0
        a, b = best_pair
        size = active[a] + active[b]
        merges.append(Merge(left=a, right=b, sim=best_sim, new_id=next_id, size=size))
        del active[a], active[b]
        merged: dict[int, _CrossStats] = {}
        stale = [pair for pair in cross if pair[0] in (a, b) or pair[1] in (a, b)]
        for pair in stale:
            other = pair[1] if pair[0] in (a, b) else pair[0]
            if other in active:
                merged.setdefault(other, _CrossStats()).add(cross[pair])
            del cross[pair]
        for other, stats in merged.items():
            cross[(other, next_id)] = stats
        active[next_id] = size
        next_id += 1
    return Dendrogram(qids=list(graph.qids), merges=merges)


@dataclass
class FlatClustering:
    threshold: float
    tightness: int  # index among the cut thresholds, ascending
    labels: dict[str, int]  # qid -> dense cluster id

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for qid, label in self.labels.items():
            out.setdefault(label, []).append(qid)
        return out


def cut(dendrogram: Dendrogram, threshold: float, tightness: int = 0) -> FlatClustering:
    """Apply the merges whose similarity is >= threshold; label leaves densely.

    Merge similarities are non-increasing, so this equals stopping at the
    first merge below the threshold. Raising the threshold only splits
    clusters, never mixes them.
    """
    n = len(dendrogram.qids)
    parent = list(range(n + len(dendrogram.merges)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in dendrogram.merges:
        if m.sim >= threshold:
            parent[find(m.left)] = m.new_id
            parent[find(m.right)] = m.new_id
    labels: dict[str, int] = {}
    dense: dict[int, int] = {}
    for leaf in range(n):
        root = find(leaf)
        if root not in dense:
            dense[root] = len(dense)
        labels[dendrogram.qids[leaf]] = dense[root]
    return FlatClustering(threshold=threshold, tightness=tightness, labels=labels)


@dataclass(frozen=True)
class CutThresholds:
    values: tuple[float, ...]  # ascending
    padded: bool  # fewer distinct scores than requested cuts


def kmeans_1d(values: np.ndarray, k: int, max_iter: int = 100) -> np.ndarray:
    """Deterministic Lloyd iteration seeded at quantile midpoints.

    Empty clusters keep their previous centroid. Returns ascending centroids.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("no values to cluster")
    centroids = np.quantile(vals, [(i + 0.5) / k for i in range(k)])
    for _ in range(max_iter):
        boundaries = (centroids[1:] + centroids[:-1]) / 2
        assign = np.searchsorted(boundaries, vals, side="right")
        new = centroids.copy()
        for c in range(k):
            members = vals[assign == c]
            if members.size:
                new[c] = members.mean()
        new = np.sort(new)
        if np.array_equal(new, centroids):
            break
        centroids = new
    return centroids


def compute_cut_thresholds(graph: SimilarityGraph, n_cuts: int = DEFAULT_CUTS) -> CutThresholds:
    """k-means centroids over the graph's edge similarities, one per cut.

    With fewer distinct edge scores than cuts, the distinct values are
    repeated to length and the result is flagged.
    """
    scores = np.array(sorted(graph.undirected_edges().values()), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("graph has no edges to derive thresholds from")
    distinct = np.unique(scores)
    if distinct.size < n_cuts:
        vals = list(distinct)
        while len(vals) < n_cuts:
            vals.append(vals[-1])
        return CutThresholds(values=tuple(float(v) for v in vals), padded=True)
    centroids = kmeans_1d(scores, n_cuts)
    return CutThresholds(values=tuple(float(c) for c in np.sort(centroids)), padded=False)


def clusterings_at(dendrogram: Dendrogram, thresholds: CutThresholds) -> list[FlatClustering]:
    return [cut(dendrogram, t, tightness=i) for i, t in enumerate(thresholds.values)]


@dataclass(frozen=True)
class ClusterDiversity:
    cluster_id: int
    size: int
    unique_tokens: int
    score: float  # unique_tokens / size


def cluster_diversity(clustering: FlatClustering, dataset: Dataset) -> list[ClusterDiversity]:
    """Unique lowercased passage-token count across members, over member count."""
    by_qid = dataset.by_qid()
    out = []
    for label, qids in sorted(clustering.members().items()):
        tokens: set[str] = set()
        for qid in qids:
            tokens.update(t.text.lower() for t in by_qid[qid].passage.tokens)
        out.append(
            ClusterDiversity(
                cluster_id=label,
                size=len(qids),
                unique_tokens=len(tokens),
                score=len(tokens) / len(qids),
            )
        )
    return out


def dedupe_test_cases(test: Dataset) -> list[Case]:
    """Unique (question text, answer texts, passage text) triples; first kept."""
    seen = set()
    out = []
    for case in test.cases:
        key = (case.question.text, tuple(sorted({a.text for a in case.answers})), case.passage.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(case)
    return out


def assign_test(
    test_cases: list[Case],
    test_enc: QuestionEncodings,
    train_enc: QuestionEncodings,
    clustering: FlatClustering,
) -> FlatClustering:
    """Each test question inherits its nearest training question's label.

    Cosine ties resolve to the lower training index. test_enc rows must match
    test_cases order.
    """
    if train_enc.matrix.shape[0] == 0:
        raise ValueError("no training questions to assign against")
    if len(test_cases) != len(test_enc.qids):
        raise ValueError("test encodings do not match the deduplicated test cases")
    labels: dict[str, int] = {}
    sims = test_enc.matrix @ train_enc.matrix.T
    for i, case in enumerate(test_cases):
        nearest = int(np.argmax(sims[i]))  # first max wins
        labels[case.question.id] = clustering.labels[train_enc.qids[nearest]]
    return FlatClustering(threshold=clustering.threshold, tightness=clustering.tightness, labels=labels)


@dataclass
class BucketReport:
    bucket_centroids: tuple[float, ...]  # ascending diversity centroids
    padded: bool
    systems: tuple[str, ...]
    # per clustering: {bucket: {system: mean F1}}
    per_clustering: list[dict[int, dict[str, float]]]
    # averaged over clusterings where the bucket is populated
    averaged: dict[int, dict[str, float]] = field(default_factory=dict)
    min_max_diff: dict[str, float] = field(default_factory=dict)
    # first listed system minus each other system, per bucket, averaged
    diffs: dict[str, dict[int, float]] = field(default_factory=dict)
    bucket_counts: list[dict[int, int]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "bucket_centroids": list(self.bucket_centroids),
            "padded": self.padded,
            "systems": list(self.systems),
            "per_clustering": [
                {str(b): dict(row) for b, row in sorted(table.items())} for table in self.per_clustering
            ],
            "averaged": {str(b): dict(row) for b, row in sorted(self.averaged.items())},
            "min_max_diff": dict(self.min_max_diff),
            "diffs": {s: {str(b): v for b, v in sorted(d.items())} for s, d in self.diffs.items()},
            "bucket_counts": [{str(b): c for b, c in sorted(t.items())} for t in self.bucket_counts],
        }


def bucket_report(
    test_clusterings: list[FlatClustering],
    diversities: list[list[ClusterDiversity]],
    f1_per_system: dict[str, dict[str, float]],
    n_buckets: int = DEFAULT_BUCKETS,
) -> BucketReport:
    """Bucket clusters by diversity score and average each system's F1 per bucket.

    Buckets come from 1-D k-means over the diversity scores of all clusters in
    all clusterings; a cluster joins its nearest centroid. Questions missing
    from a system's F1 map are ignored for that system. The headline number
    per system is max minus min across the averaged bucket means.
    """
    if len(test_clusterings) != len(diversities):
        raise ValueError("one diversity list per clustering required")
    if not f1_per_system:
        raise ValueError("no systems to report")
    scores = np.array([d.score for divs in diversities for d in divs], dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no clusters to bucket")
    distinct = np.unique(scores)
    padded = distinct.size < n_buckets
    if padded:
        cents = list(distinct)
        while len(cents) < n_buckets:
            cents.append(cents[-1])
        centroids = np.array(cents)
    else:
        centroids = kmeans_1d(scores, n_buckets)
    systems = tuple(f1_per_system.keys())

    per_clustering: list[dict[int, dict[str, float]]] = []
    bucket_counts: list[dict[int, int]] = []
    sums: dict[int, dict[str, list[float]]] = {}
    diff_sums: dict[str, dict[int, list[float]]] = {s: {} for s in systems[1:]}
    for clustering, divs in zip(test_clusterings, diversities):
        bucket_of_cluster = {d.cluster_id: int(np.argmin(np.abs(centroids - d.score))) for d in divs}
        members = clustering.members()
        table: dict[int, dict[str, float]] = {}
        counts: dict[int, int] = {}
        bucket_qids: dict[int, list[str]] = {}
        for cluster_id, bucket in bucket_of_cluster.items():
            bucket_qids.setdefault(bucket, []).extend(members.get(cluster_id, []))
        for bucket, qids in sorted(bucket_qids.items()):
            if not qids:
                continue
            counts[bucket] = len(qids)
            row: dict[str, float] = {}
            for system in systems:
                f1s = [f1_per_system[system][q] for q in qids if q in f1_per_system[system]]
                if f1s:
                    row[system] = sum(f1s) / len(f1s)
            if row:
                table[bucket] = row
                sums.setdefault(bucket, {s: [] for s in systems})
                for system, val in row.items():
                    sums[bucket][system].append(val)
                base = row.get(systems[0])
                if base is not None:
                    for system in systems[1:]:
                        if system in row:
                            diff_sums[system].setdefault(bucket, []).append(base - row[system])
        per_clustering.append(table)
        bucket_counts.append(counts)

    averaged = {
        bucket: {s: sum(vals) / len(vals) for s, vals in by_system.items() if vals}
        for bucket, by_system in sorted(sums.items())
    }
    min_max_diff = {}
    for system in systems:
        vals = [row[system] for row in averaged.values() if system in row]
        min_max_diff[system] = (max(vals) - min(vals)) if vals else 0.0
    diffs = {
        system: {bucket: sum(vals) / len(vals) for bucket, vals in sorted(per_bucket.items())}
        for system, per_bucket in diff_sums.items()
    }
    return BucketReport(
        bucket_centroids=tuple(float(c) for c in centroids),
        padded=padded,
        systems=systems,
        per_clustering=per_clustering,
        averaged=averaged,
        min_max_diff=min_max_diff,
        diffs=diffs,
        bucket_counts=bucket_counts,
    )
