"""Command-line pipeline: ingest, build, train, predict, evaluate, analyze.

Every command writes its primary outputs plus a run manifest (config
snapshot, input hashes, output list, timings) next to them. Outputs are
deterministic for a fixed config; the manifest is the only file containing
wall-clock numbers.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import casebase as casebase_mod
from . import datafile, diversity
from .casebase import CasebaseFormatError, FingerprintMismatchError, RetrievalConfig
from .corpus import Dataset, dataset_stats, ingest_mrqa, truncate_context
from .encoder import (
    EmbeddingFormatError,
    EmbeddingLookupError,
    ImportedEncoder,
    ToyEncoder,
    init_toy_params,
    load_params,
    save_params,
)
from .metrics import PredictedAnswer, evaluate
from .reuse import (
    AGG_SOFTMAX,
    AGG_SUM,
    SIM_COSINE,
    SIM_DOT,
    NoCandidatesError,
    NoCaseError,
    predict,
    read_predictions,
    write_predictions,
)
from .trainer import TrainConfig, train

CACHE_ENV = "CASEQA_CACHE_DIR"

_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    CasebaseFormatError,
    FingerprintMismatchError,
    EmbeddingFormatError,
    EmbeddingLookupError,
    NoCaseError,
    NoCandidatesError,
    datafile.DatasetFileError,
)


# --- run manifests ----------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_path(path: str) -> str:
    p = Path(path)
    if p.is_dir():
        h = hashlib.sha256()
        for f in sorted(p.rglob("*")):
            if f.is_file():
                h.update(f.relative_to(p).as_posix().encode())
                h.update(_sha256_file(f).encode())
        return h.hexdigest()
    return _sha256_file(p)


def _manifest_path(primary_out: str) -> Path:
    out = Path(primary_out)
    return out / "run_manifest.json" if out.is_dir() else Path(str(out) + ".run.json")


def _write_manifest(
    command: str,
    config: dict,
    inputs: list[str],
    outputs: list[str],
    started: float,
    extra: dict | None = None,
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256_path(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": config.get("seed"),
        "timings": {"elapsed_s": round(time.monotonic() - started, 3)},
    }
    if extra:
        manifest.update(extra)
    path = _manifest_path(outputs[0])
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_json(path: str, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- shared argument plumbing -------------------------------------------------------


def _load_gazetteer(path: str | None) -> frozenset[str]:
    if not path:
        return frozenset()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(line.strip().lower() for line in lines if line.strip())


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--encoder", choices=["toy", "imported"], default="toy")
    parser.add_argument("--checkpoint", help="toy encoder parameter file (toy backend)")
    parser.add_argument("--manifest", help="embedding manifest (imported backend)")


def _backend_from_args(args):
    if args.encoder == "imported" or (args.manifest and not args.checkpoint):
        if not args.manifest:
            raise ValueError("imported encoder needs --manifest")
        return ImportedEncoder(args.manifest)
    if args.manifest:
        raise ValueError("--manifest only applies to --encoder imported")
    params = load_params(args.checkpoint) if args.checkpoint else init_toy_params()
    return ToyEncoder(params)


def _backend_inputs(args) -> list[str]:
    return [p for p in (args.checkpoint, args.manifest) if p]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gazetteer", help="file of lowercase entity phrases, one per line")


def _read_predicted_answers(path: str) -> dict[str, PredictedAnswer]:
    return {
        qid: PredictedAnswer(
            text=rec["answer"],
            char_start=rec["char_span"][0],
            char_end=rec["char_span"][1],
            passage_id=rec["passage_id"],
        )
        for qid, rec in read_predictions(path).items()
    }


def _predict_dataset(dataset, cb, backend, k, no_filters, sim, aggregation, gazetteer, jobs):
    """Predictions in dataset order plus (qid, reason) rows for skipped cases."""

    def one(case):
        cfg = RetrievalConfig(k=k, exclude_question_id=None if no_filters else case.question.id)
        try:
            return predict(case.question, case.passage, cb, backend, cfg, sim, aggregation, gazetteer)
        except (NoCaseError, NoCandidatesError, EmbeddingLookupError) as exc:
            return (case.question.id, f"{type(exc).__name__}: {exc}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, dataset.cases))
    else:
        results = [one(case) for case in dataset.cases]
    predictions = [r for r in results if not isinstance(r, tuple)]
    skipped = [r for r in results if isinstance(r, tuple)]
    return predictions, skipped


# --- commands ----------------------------------------------------------------------


def cmd_ingest(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    result = ingest_mrqa(args.input, name=args.name or Path(args.input).name, limit=args.limit)
    cases = list(result.dataset.cases)
    window_dropped_answers = 0
    window_skipped = []
    if args.context_window is not None:
        kept = []
        for case in cases:
            try:
                cropped, dropped = truncate_context(case, args.context_window)
            except ValueError as exc:
                window_skipped.append((case.question.id, str(exc)))
                continue
            kept.append(cropped)
            window_dropped_answers += dropped
        cases = kept
    dataset = Dataset(name=result.dataset.name, cases=tuple(cases))
    datafile.save_dataset(dataset, args.out, gaz, include_candidates=args.with_candidates)
    stats = dataset_stats(dataset)
    summary = result.summary
    _write_json(
        str(args.out) + ".stats.json",
        {
            "cases": len(dataset),
            "ingest": {
                "lines_read": summary.lines_read,
                "cases_kept": summary.cases_kept,
                "skipped_lines": summary.skipped_lines,
                "skipped_questions": summary.skipped_questions,
                "dropped_answers": summary.dropped_answers,
                "errors": summary.errors,
            },
            "window": {
                "context_window": args.context_window,
                "dropped_answers": window_dropped_answers,
                "skipped_cases": window_skipped[:50],
            },
            "stats": asdict(stats),
        },
    )
    _write_manifest(
        "ingest",
        {
            "input": str(args.input),
            "out": str(args.out),
            "limit": args.limit,
            "context_window": args.context_window,
            "with_candidates": args.with_candidates,
            "gazetteer": args.gazetteer,
            "name": dataset.name,
        },
        inputs=[args.input] + ([args.gazetteer] if args.gazetteer else []),
        outputs=[args.out, str(args.out) + ".stats.json"],
        started=started,
    )
    return 0


def cmd_build_casebase(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    backend = _backend_from_args(args)
    dataset = datafile.load_dataset(args.dataset)
    cache_root = os.environ.get(CACHE_ENV)
    cache_dir = None
    cache_hit = False
    if cache_root:
        key = hashlib.sha256(
            f"{_sha256_path(args.dataset)}:{backend.fingerprint}:{','.join(sorted(gaz))}".encode()
        ).hexdigest()[:24]
        cache_dir = Path(cache_root) / f"casebase-{key}"
    if cache_dir is not None and (cache_dir / "manifest.json").exists():
        shutil.copytree(cache_dir, args.out, dirs_exist_ok=True)
        cache_hit = True
    else:
        cb = casebase_mod.build(dataset, backend, gaz)
        casebase_mod.save(cb, args.out)
        if cache_dir is not None:
            try:
                shutil.copytree(args.out, cache_dir, dirs_exist_ok=True)
            except OSError:
                pass  # cache is best-effort, never fatal
    _write_manifest(
        "build-casebase",
        {
            "dataset": str(args.dataset),
            "encoder": args.encoder,
            "checkpoint": args.checkpoint,
            "manifest": args.manifest,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
            "fingerprint": backend.fingerprint,
        },
        inputs=[args.dataset] + _backend_inputs(args) + ([args.gazetteer] if args.gazetteer else []),
        outputs=[args.out],
        started=started,
        extra={"cache_hit": cache_hit, "entries": len(dataset)},
    )
    return 0


def cmd_train(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    dataset = datafile.load_dataset(args.dataset)
    cb = casebase_mod.load(args.casebase)
    params = load_params(args.checkpoint) if args.checkpoint else init_toy_params()
    cfg = TrainConfig(
        tau=args.tau,
        k=args.k,
        sim_threshold=args.threshold if args.threshold >= 0 else None,
        use_wh_filter=args.wh_filter,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        grad_clip=args.grad_clip,
        sim=args.sim,
    )
    result = train(dataset, cb, params, cfg, gaz)
    save_params(result.params, args.out_checkpoint)
    trace_path = str(args.out_checkpoint) + ".trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as fh:
        for row in result.trace:
            fh.write(json.dumps(asdict(row), sort_keys=True) + "\n")
    _write_manifest(
        "train",
        {
            "dataset": str(args.dataset),
            "casebase": str(args.casebase),
            "checkpoint": args.checkpoint,
            "out_checkpoint": str(args.out_checkpoint),
            "gazetteer": args.gazetteer,
            **asdict(cfg),
        },
        inputs=[args.dataset, args.casebase] + ([args.checkpoint] if args.checkpoint else []),
        outputs=[args.out_checkpoint, trace_path],
        started=started,
        extra={"final_mean_loss": result.trace[-1].mean_loss if result.trace else None},
    )
    return 0


def cmd_predict(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    dataset = datafile.load_dataset(args.dataset)
    cb = casebase_mod.load(args.casebase)
    backend = _backend_from_args(args)
    predictions, skipped = _predict_dataset(
        dataset, cb, backend, args.k, args.no_filters, args.sim, args.aggregation, gaz, args.jobs
    )
    write_predictions(predictions, args.out)
    _write_manifest(
        "predict",
        {
            "dataset": str(args.dataset),
            "casebase": str(args.casebase),
            "encoder": args.encoder,
            "checkpoint": args.checkpoint,
            "manifest": args.manifest,
            "k": args.k,
            "no_filters": args.no_filters,
            "sim": args.sim,
            "aggregation": args.aggregation,
            "jobs": args.jobs,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
        },
        inputs=[args.dataset, args.casebase] + _backend_inputs(args),
        outputs=[args.out],
        started=started,
        extra={"predicted": len(predictions), "skipped": skipped[:50], "skipped_count": len(skipped)},
    )
    return 0


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    dataset = datafile.load_dataset(args.dataset)
    predictions = _read_predicted_answers(args.predictions)
    result, rows = evaluate(predictions, dataset, subset=args.subset, gazetteer=gaz)
    _write_json(args.out, asdict(result))
    rows_path = str(args.out) + ".rows.jsonl"
    with open(rows_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(asdict(row), sort_keys=True) + "\n")
    _write_manifest(
        "evaluate",
        {
            "predictions": str(args.predictions),
            "dataset": str(args.dataset),
            "subset": args.subset,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
        },
        inputs=[args.predictions, args.dataset],
        outputs=[args.out, rows_path],
        started=started,
    )
    return 0


def cmd_ablate_k(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    dataset = datafile.load_dataset(args.dataset)
    cb = casebase_mod.load(args.casebase)
    backend = _backend_from_args(args)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    if not ks:
        raise ValueError("--ks must name at least one k")
    table = []
    for k in ks:
        predictions, skipped = _predict_dataset(
            dataset, cb, backend, k, args.no_filters, args.sim, args.aggregation, gaz, args.jobs
        )
        result, _ = evaluate(
            {p.qid: PredictedAnswer(p.answer.text, p.answer.char_start, p.answer.char_end, p.passage_id) for p in predictions},
            dataset,
            subset=args.subset,
            gazetteer=gaz,
        )
        table.append({"k": k, "skipped": len(skipped), **asdict(result)})
    _write_json(args.out, table)
    csv_path = str(args.out) + ".csv"
    fields = ["k", "n", "missing", "skipped", "em", "f1", "span_em", "span_f1", "candidate_recall"]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in table:
            writer.writerow({f: row[f] for f in fields})
    _write_manifest(
        "ablate-k",
        {
            "dataset": str(args.dataset),
            "casebase": str(args.casebase),
            "checkpoint": args.checkpoint,
            "manifest": args.manifest,
            "encoder": args.encoder,
            "ks": args.ks,
            "subset": args.subset,
            "no_filters": args.no_filters,
            "sim": args.sim,
            "aggregation": args.aggregation,
            "jobs": args.jobs,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
        },
        inputs=[args.dataset, args.casebase] + _backend_inputs(args),
        outputs=[args.out, csv_path],
        started=started,
    )
    return 0


def cmd_augment(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    cb = casebase_mod.load(args.casebase)
    backend = _backend_from_args(args)
    new_dataset = datafile.load_dataset(args.new_dataset)
    taken = new_dataset.cases[: args.limit] if args.limit is not None else new_dataset.cases
    subset = Dataset(name=new_dataset.name, cases=taken)
    augmented = casebase_mod.augment(cb, subset, backend, gaz)
    casebase_mod.save(augmented, args.out)
    _write_manifest(
        "augment",
        {
            "casebase": str(args.casebase),
            "new_dataset": str(args.new_dataset),
            "limit": args.limit,
            "encoder": args.encoder,
            "checkpoint": args.checkpoint,
            "manifest": args.manifest,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
        },
        inputs=[args.casebase, args.new_dataset] + _backend_inputs(args),
        outputs=[args.out],
        started=started,
        extra={"base_entries": len(cb.entries), "added": len(subset), "total": len(augmented.entries)},
    )
    return 0


def cmd_analyze_diversity(args) -> int:
    started = time.monotonic()
    gaz = _load_gazetteer(args.gazetteer)
    train_ds = datafile.load_dataset(args.train)
    test_ds = datafile.load_dataset(args.test)
    backend = _backend_from_args(args)
    systems = []
    for spec in args.predictions_per_system or []:
        name, _, path = spec.partition("=")
        if not name or not path:
            raise ValueError(f"--predictions-per-system wants NAME=PATH, got {spec!r}")
        systems.append((name, path))
    if not systems:
        raise ValueError("at least one --predictions-per-system NAME=PATH is required")

    train_enc = diversity.encode_masked_questions(train_ds, backend, gaz)
    graph = diversity.build_similarity_graph(train_enc, args.max_neighbors, args.min_sim)
    thresholds = diversity.compute_cut_thresholds(graph, args.C)
    dendrogram = diversity.hac(graph, args.linkage)
    train_clusterings = diversity.clusterings_at(dendrogram, thresholds)
    diversities = [diversity.cluster_diversity(c, train_ds) for c in train_clusterings]

    deduped = diversity.dedupe_test_cases(test_ds)
    dedup_ds = Dataset(name=test_ds.name, cases=tuple(deduped))
    test_enc = diversity.encode_masked_questions(dedup_ds, backend, gaz)
    test_clusterings = [
        diversity.assign_test(deduped, test_enc, train_enc, c) for c in train_clusterings
    ]

    f1_per_system: dict[str, dict[str, float]] = {}
    for name, path in systems:
        _, rows = evaluate(_read_predicted_answers(path), test_ds, gazetteer=gaz)
        f1_per_system[name] = {r.qid: 100.0 * r.f1 for r in rows}

    report = diversity.bucket_report(test_clusterings, diversities, f1_per_system, args.B)
    _write_json(
        args.out,
        {
            "linkage": args.linkage,
            "max_neighbors": args.max_neighbors,
            "min_sim": args.min_sim,
            "thresholds": list(thresholds.values),
            "padded_thresholds": thresholds.padded,
            "train_questions": len(train_ds),
            "test_questions": len(test_ds),
            "test_unique_triples": len(deduped),
            "report": report.to_json_dict(),
        },
    )

    averaged_csv = str(args.out) + ".averaged.csv"
    with open(averaged_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bucket", "diversity_centroid"] + [s for s, _ in systems])
        for bucket in sorted(report.averaged):
            row = report.averaged[bucket]
            writer.writerow(
                [bucket, report.bucket_centroids[bucket]] + [row.get(s, "") for s, _ in systems]
            )
    per_clustering_csv = str(args.out) + ".per_clustering.csv"
    with open(per_clustering_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clustering", "threshold", "bucket", "system", "mean_f1", "questions"])
        for idx, table in enumerate(report.per_clustering):
            for bucket in sorted(table):
                for system, val in table[bucket].items():
                    writer.writerow(
                        [idx, thresholds.values[idx], bucket, system, val, report.bucket_counts[idx].get(bucket, 0)]
                    )
    diffs_csv = str(args.out) + ".diffs.csv"
    with open(diffs_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        base = systems[0][0]
        writer.writerow(["bucket", "diversity_centroid", "system", f"{base}_minus_system_f1"])
        for system, per_bucket in report.diffs.items():
            for bucket in sorted(per_bucket):
                writer.writerow([bucket, report.bucket_centroids[bucket], system, per_bucket[bucket]])

    _write_manifest(
        "analyze-diversity",
        {
            "train": str(args.train),
            "test": str(args.test),
            "systems": [f"{n}={p}" for n, p in systems],
            "C": args.C,
            "B": args.B,
            "linkage": args.linkage,
            "max_neighbors": args.max_neighbors,
            "min_sim": args.min_sim,
            "encoder": args.encoder,
            "checkpoint": args.checkpoint,
            "manifest": args.manifest,
            "out": str(args.out),
            "gazetteer": args.gazetteer,
        },
        inputs=[args.train, args.test] + [p for _, p in systems] + _backend_inputs(args),
        outputs=[args.out, averaged_csv, per_clustering_csv, diffs_csv],
        started=started,
        extra={"min_max_diff": report.min_max_diff},
    )
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caseqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="MRQA JSONL to internal dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--context-window", type=int, help="crop passages to ±N tokens around the first answer")
    p.add_argument("--name", help="dataset name (defaults to the input file name)")
    p.add_argument("--with-candidates", action="store_true", help="store candidate spans in the file")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-casebase", help="encode a dataset into a casebase directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_build_casebase)

    p = sub.add_parser("train", help="fit toy encoder parameters on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--casebase", required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.95, help="retrieval floor; negative disables")
    p.add_argument("--wh-filter", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-clip", type=float)
    p.add_argument("--sim", choices=[SIM_DOT, SIM_COSINE], default=SIM_DOT)
    p.add_argument("--checkpoint", help="initial parameters (default: fresh init)")
    p.add_argument("--out-checkpoint", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="answer a dataset from a casebase")
    p.add_argument("--dataset", required=True)
    p.add_argument("--casebase", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--no-filters", action="store_true", help="disable self-exclusion as well")
    p.add_argument("--sim", choices=[SIM_DOT, SIM_COSINE], default=SIM_DOT)
    p.add_argument("--aggregation", choices=[AGG_SUM, AGG_SOFTMAX], default=AGG_SUM)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold answers")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--subset", choices=["all", "multi-mention"], default="all")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate-k", help="predict+evaluate across several k values")
    p.add_argument("--dataset", required=True)
    p.add_argument("--casebase", required=True)
    p.add_argument("--ks", default="1,5,10,20")
    p.add_argument("--subset", choices=["all", "multi-mention"], default="all")
    p.add_argument("--no-filters", action="store_true")
    p.add_argument("--sim", choices=[SIM_DOT, SIM_COSINE], default=SIM_DOT)
    p.add_argument("--aggregation", choices=[AGG_SUM, AGG_SOFTMAX], default=AGG_SUM)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate_k)

    p = sub.add_parser("augment", help="extend a casebase with new cases, no training")
    p.add_argument("--casebase", required=True)
    p.add_argument("--new-dataset", required=True)
    p.add_argument("--limit", type=int, default=256, help="take at most this many new cases")
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("analyze-diversity", help="cluster questions and report F1 by lexical diversity")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument(
        "--predictions-per-system",
        action="append",
        metavar="NAME=PATH",
        help="prediction file per system; repeatable, first is the reference",
    )
    p.add_argument("--C", type=int, default=diversity.DEFAULT_CUTS, help="number of threshold cuts")
    p.add_argument("--B", type=int, default=diversity.DEFAULT_BUCKETS, help="number of diversity buckets")
    p.add_argument("--linkage", choices=list(diversity.LINKAGES), default=diversity.LINKAGE_AVERAGE)
    p.add_argument("--max-neighbors", type=int, default=diversity.DEFAULT_MAX_NEIGHBORS)
    p.add_argument("--min-sim", type=float, default=diversity.DEFAULT_MIN_SIM)
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_analyze_diversity)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"caseqa {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
