#!/usr/bin/env python3
"""Run the full detection pipeline against a real log corpus.

Reproduces the standard alert-tagged (BGL, Thunderbird) and block-labeled
(HDFS) evaluation protocol: the first 80% of normal sequences, in stream
order, become the known-normal store; the remaining normals plus every
anomaly are scored. Alert-tagged datasets are evaluated per line, HDFS
per block (lines grouped by block id and concatenated).

The hash provider is the default so the script runs without any model,
but matching published transformer-based numbers requires real sentence
embeddings: export RPDE files for both the store and the test queries
(e.g. with plm-bridge) and pass --embeddings/--query-embeddings.

Examples:
    run_benchmark.py --dataset bgl --log-file BGL.log
    run_benchmark.py --dataset hdfs --log-file HDFS.log \
        --label-file anomaly_label.csv \
        --embeddings docs.rpde --query-embeddings queries.rpde
"""

import argparse
import csv
import json
import re
import sys

from logsim import (
    CoreSetConfig,
    ProviderConfig,
    ScoringEngine,
    apply_masks,
    block_labels,
    build_block_views,
    build_db,
    embed_batch,
    evaluate,
    load_rules,
)
from logsim.ingest import RawLogRecord

BLOCK_ID = re.compile(r"blk_-?\d+")


def load_alert_tagged(path):
    """BGL/Thunderbird convention: a leading "-" marks a normal line; any
    other alert tag marks an anomaly. The tag itself is stripped."""
    records = []
    with open(path, encoding="utf-8", errors="replace") as handle:
        for i, line in enumerate(handle):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            tag, _, rest = line.partition(" ")
            records.append(RawLogRecord(index=i, text=rest,
                                        label=0 if tag == "-" else 1))
    return records


def load_block_labeled(path, label_file):
    """HDFS convention: lines carry blk_ ids; labels come from a CSV of
    BlockId,Label rows with Label in {Normal, Anomaly}."""
    labels = {}
    with open(label_file, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            labels[row["BlockId"]] = 0 if row["Label"] == "Normal" else 1
    records = []
    with open(path, encoding="utf-8", errors="replace") as handle:
        for i, line in enumerate(handle):
            line = line.rstrip("\n")
            match = BLOCK_ID.search(line)
            if not match:
                continue
            block = match.group(0)
            if block not in labels:
                continue
            records.append(RawLogRecord(index=i, text=line,
                                        label=labels[block], block_id=block))
    return records


def split_blocks(records, known_fraction):
    """First known_fraction of the normal blocks (by first appearance)
    become the store; every other block is test."""
    order, label_of = [], {}
    for record in records:
        if record.block_id not in label_of:
            order.append(record.block_id)
            label_of[record.block_id] = record.label
        label_of[record.block_id] = max(label_of[record.block_id], record.label)
    normal_blocks = [b for b in order if label_of[b] == 0]
    n_known = max(1, int(round(known_fraction * len(normal_blocks))))
    known_ids = set(normal_blocks[:n_known])
    known = [r for r in records if r.block_id in known_ids]
    test = [r for r in records if r.block_id not in known_ids]
    return known, test


def split_lines(records, known_fraction):
    normals = [r for r in records if r.label == 0]
    n_known = max(1, int(round(known_fraction * len(normals))))
    known_ids = {r.index for r in normals[:n_known]}
    known = [r for r in records if r.index in known_ids]
    test = [r for r in records if r.index not in known_ids]
    return known, test


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True,
                        choices=("bgl", "thunderbird", "hdfs"))
    parser.add_argument("--log-file", required=True)
    parser.add_argument("--label-file",
                        help="block label CSV (required for hdfs)")
    parser.add_argument("--rules",
                        help="JSON mask rules; defaults cover IPs, paths, hex "
                             "and bare numbers but not dataset-specific ids")
    parser.add_argument("--embeddings",
                        help="RPDE file for the known-normal store")
    parser.add_argument("--query-embeddings",
                        help="RPDE file for the test queries")
    parser.add_argument("--dim", type=int, default=768,
                        help="hash-provider dim when no RPDE files are given")
    parser.add_argument("--core-ratio", type=float, default=0.01)
    parser.add_argument("--aggregation", default="sum", choices=("sum", "mean"),
                        help="mean removes length bias when sequence lengths "
                             "vary, as they do across blocks")
    parser.add_argument("--known-fraction", type=float, default=0.8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    block_mode = args.dataset == "hdfs"
    if block_mode:
        if not args.label_file:
            parser.error("--label-file is required for hdfs")
        records = load_block_labeled(args.log_file, args.label_file)
        known, test = split_blocks(records, args.known_fraction)
        max_tokens = 512
    else:
        records = load_alert_tagged(args.log_file)
        known, test = split_lines(records, args.known_fraction)
        max_tokens = 128
    print(f"{args.dataset}: {len(records)} records, "
          f"{len(known)} known-normal, {len(test)} test", file=sys.stderr)

    if args.embeddings:
        provider = ProviderConfig(provider="file", dim=None,
                                  max_tokens=max_tokens,
                                  source=args.embeddings)
    else:
        print("note: hash provider in use; published transformer-based "
              "numbers need real embeddings via --embeddings", file=sys.stderr)
        provider = ProviderConfig(dim=args.dim, max_tokens=max_tokens,
                                  seed=args.seed)

    rules = load_rules(args.rules) if args.rules else None
    known_sequences = apply_masks(known, rules)
    if block_mode:
        views = build_block_views(known, known_sequences)
        db, _ = build_db(view.canonical_text for view in views)
    else:
        db, _ = build_db(known_sequences)
    docs = embed_batch(db, provider)
    print(f"store: {len(db)} unique sequences", file=sys.stderr)

    query_provider = provider
    if args.query_embeddings:
        query_provider = ProviderConfig(provider="file", dim=None,
                                        max_tokens=max_tokens,
                                        source=args.query_embeddings)

    engine = ScoringEngine(docs, CoreSetConfig(ratio=args.core_ratio,
                                               aggregation=args.aggregation))
    test_sequences = apply_masks(test, rules)
    if block_mode:
        test_views = build_block_views(test, test_sequences)
        q_db, lookup = build_db(v.canonical_text for v in test_views)
        labels = block_labels(test, test_views)
    else:
        q_db, lookup = build_db(test_sequences)
        labels = [r.label for r in test]
    scores = engine.score(embed_batch(q_db, query_provider), args.workers)
    pairs = [(scores[sid].abnormal_score, label)
             for sid, label in zip(lookup, labels)]

    report = evaluate(pairs, config={
        "dataset": args.dataset, "core_ratio": args.core_ratio,
        "aggregation": args.aggregation,
        "k": engine.k, "documents": len(db),
        "queries_scored": engine.stats.queries_scored,
        "scoring_seconds": round(engine.stats.scoring_seconds, 3),
        "unit": "block" if block_mode else "line",
    })
    print(json.dumps(report.to_dict(), indent=2))


if __name__ == "__main__":
    main()
