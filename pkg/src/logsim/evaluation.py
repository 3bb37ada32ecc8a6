"""Metrics, coverage analysis and ablation drivers.

Conventions, applied everywhere: a record is predicted abnormal when
its score is >= the threshold; precision with no predicted positives is
reported as 0 with a degenerate flag rather than an error; the best-F1
sweep evaluates every distinct score (plus +infinity) as a candidate
threshold and returns the smallest threshold attaining the maximum.

AUROC ships in two forms: an O(n log n) rank-based implementation used
by default, and the O(P*N) pairwise definition (ties count one half)
kept as the reference the fast path is tested against.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from time import perf_counter
from typing import Iterable, Sequence

import numpy as np

from .detector import RunConfig, allocate
from .embed import embed_batch
from .errors import ConfigError, MetricError, ValidationError
from .ingest import ProcessedSequence, RawLogRecord, apply_masks
from .retrieval import CoreSetConfig, ScoringEngine
from .store import SequenceDB, build_db
from .validation import require

__all__ = [
    "LabeledScore",
    "PRF1Result",
    "EvalReport",
    "CoverageReport",
    "AblationCell",
    "prf1",
    "best_f1_sweep",
    "auroc",
    "auroc_pairwise",
    "evaluate",
    "coverage",
    "split_corpus",
    "sample_known_uniques",
    "ablate",
    "render_cells",
]


@dataclass(frozen=True)
class LabeledScore:
    score: float
    label: int


def _as_arrays(pairs: Iterable) -> tuple[np.ndarray, np.ndarray]:
    scores, labels = [], []
    for pair in pairs:
        if isinstance(pair, LabeledScore):
            score, label = pair.score, pair.label
        else:
            score, label = pair
        scores.append(float(score))
        labels.append(label)
    score_arr = np.asarray(scores, dtype=np.float64)
    label_arr = np.asarray(labels)
    if len(score_arr) == 0:
        raise MetricError("no labeled scores given")
    if not np.all(np.isfinite(score_arr)):
        raise ValidationError("scores must be finite")
    if not np.all(np.isin(label_arr, (0, 1))):
        raise ValidationError("labels must be 0 or 1")
    return score_arr, label_arr.astype(np.int64)


@dataclass(frozen=True)
class PRF1Result:
    """Precision/recall/F1 with confusion counts at one threshold.

    ``no_predicted_positives`` marks the degenerate case where nothing
    was flagged; precision (and hence F1) is then reported as 0.
    """

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    delta: float
    no_predicted_positives: bool


def prf1(pairs: Iterable, delta: float) -> PRF1Result:
    """Precision, recall and F1 at threshold ``delta`` (score >= delta is abnormal)."""
    scores, labels = _as_arrays(pairs)
    preds = scores >= delta
    tp = int(np.sum(preds & (labels == 1)))
    fp = int(np.sum(preds & (labels == 0)))
    fn = int(np.sum(~preds & (labels == 1)))
    tn = int(np.sum(~preds & (labels == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF1Result(precision, recall, f1, tp, fp, tn, fn,
                      float(delta), tp + fp == 0)


def best_f1_sweep(pairs: Iterable) -> tuple[float, float]:
    """Maximum F1 over every candidate threshold, and the smallest threshold
    attaining it.

    Candidates are the distinct scores plus +infinity (predict nothing).
    """
    scores, labels = _as_arrays(pairs)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cum_tp = np.cumsum(labels[order] == 1)
    cum_fp = np.cumsum(labels[order] == 0)
    # A candidate delta equal to sorted_scores[i] predicts positives for
    # every position with score >= it, i.e. through the last tied index.
    last_tied = np.flatnonzero(np.diff(sorted_scores) != 0)
    last_tied = np.concatenate([last_tied, [len(sorted_scores) - 1]])
    tp = cum_tp[last_tied].astype(np.float64)
    fp = cum_fp[last_tied].astype(np.float64)
    positives = float(cum_tp[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = tp / positives if positives > 0 else np.zeros_like(tp)
        f1 = np.where(precision + recall > 0,
                      2 * precision * recall / (precision + recall), 0.0)
    best = float(f1.max(initial=0.0))
    if best == 0.0:
        return 0.0, math.inf
    winners = sorted_scores[last_tied[f1 == best]]
    return best, float(winners.min())


def auroc(pairs: Iterable) -> float:
    """Area under the ROC curve via average ranks (ties handled exactly)."""
    scores, labels = _as_arrays(pairs)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs at least one positive and one negative label")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    boundaries = np.concatenate([[0], np.flatnonzero(np.diff(sorted_scores)) + 1,
                                 [len(scores)]])
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc_pairwise(pairs: Iterable) -> float:
    """AUROC by definition: fraction of (positive, negative) pairs ranked
    correctly, ties counting one half. Quadratic; the reference for auroc()."""
    scores, labels = _as_arrays(pairs)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise MetricError("AUROC needs at least one positive and one negative label")
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


@dataclass(frozen=True)
class EvalReport:
    """Headline metrics for one scored corpus."""

    n: int
    positives: int
    negatives: int
    delta: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    no_predicted_positives: bool
    best_f1: float
    best_delta: float
    auroc: float | None
    config: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "n": self.n, "positives": self.positives, "negatives": self.negatives,
            "delta": self.delta, "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "no_predicted_positives": self.no_predicted_positives,
            "best_f1": self.best_f1, "best_delta": self.best_delta, "auroc": self.auroc,
        }
        if self.config is not None:
            out["config"] = self.config
        return out


def evaluate(pairs: Iterable, delta: float | None = None,
             config: dict | None = None) -> EvalReport:
    """Full report: PRF1 at ``delta`` (default: the best-F1 threshold),
    the best-F1 sweep, and AUROC when both classes are present."""
    scores, labels = _as_arrays(pairs)
    pairs_list = list(zip(scores, labels))
    best, best_delta = best_f1_sweep(pairs_list)
    at_delta = prf1(pairs_list, best_delta if delta is None else delta)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    area = auroc(pairs_list) if n_pos > 0 and n_neg > 0 else None
    return EvalReport(
        n=len(pairs_list), positives=n_pos, negatives=n_neg,
        delta=at_delta.delta, precision=at_delta.precision, recall=at_delta.recall,
        f1=at_delta.f1, tp=at_delta.tp, fp=at_delta.fp, tn=at_delta.tn, fn=at_delta.fn,
        no_predicted_positives=at_delta.no_predicted_positives,
        best_f1=best, best_delta=best_delta, auroc=area, config=config,
    )


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageReport:
    """How much of the test period the known-normal store already explains.

    Occurrence-weighted numbers are the headline (every record and every
    token occurrence counts); unique-weighted variants count each
    distinct sequence or token once.
    """

    seq_coverage: float
    token_coverage: float
    seq_coverage_unique: float
    token_coverage_unique: float
    n_test_records: int
    n_test_tokens: int

    def to_dict(self) -> dict:
        return {
            "seq_coverage": self.seq_coverage,
            "token_coverage": self.token_coverage,
            "seq_coverage_unique": self.seq_coverage_unique,
            "token_coverage_unique": self.token_coverage_unique,
            "n_test_records": self.n_test_records,
            "n_test_tokens": self.n_test_tokens,
        }


def coverage(db: SequenceDB, test_sequences: Sequence[ProcessedSequence | str]) -> CoverageReport:
    """Sequence- and token-level coverage of test sequences by the store."""
    require(len(test_sequences) > 0, "coverage needs at least one test sequence",
            MetricError)
    vocab: set[str] = set()
    for _, text in db.items():
        vocab.update(text.split())

    texts = [s if isinstance(s, str) else s.text for s in test_sequences]
    covered_records = sum(1 for t in texts if t in db)
    unique_texts = set(texts)
    covered_unique = sum(1 for t in unique_texts if t in db)

    token_counts: Counter[str] = Counter()
    for t in texts:
        token_counts.update(t.split())
    total_occurrences = sum(token_counts.values())
    covered_occurrences = sum(c for tok, c in token_counts.items() if tok in vocab)
    distinct = len(token_counts)
    covered_distinct = sum(1 for tok in token_counts if tok in vocab)

    return CoverageReport(
        seq_coverage=covered_records / len(texts),
        token_coverage=covered_occurrences / total_occurrences if total_occurrences else 0.0,
        seq_coverage_unique=covered_unique / len(unique_texts),
        token_coverage_unique=covered_distinct / distinct if distinct else 0.0,
        n_test_records=len(texts),
        n_test_tokens=total_occurrences,
    )


# ---------------------------------------------------------------------------
# Corpus handling and ablations
# ---------------------------------------------------------------------------

def split_corpus(records: Sequence[RawLogRecord],
                 known_fraction: float = 0.8) -> tuple[list[RawLogRecord], list[RawLogRecord]]:
    """Split a labeled corpus into known-normal and test parts.

    The first ``known_fraction`` of the normal records (stream order)
    become the known-normal set; the remaining normals plus every
    abnormal record form the test set, keeping their original order.
    """
    require(0.0 < known_fraction < 1.0, "known_fraction must be in (0, 1)")
    for record in records:
        if record.label is None:
            raise MetricError(f"record {record.index} has no label; cannot split")
    normals = [r for r in records if r.label == 0]
    require(len(normals) >= 2, "need at least two normal records to split", MetricError)
    n_known = max(1, int(round(known_fraction * len(normals))))
    n_known = min(n_known, len(normals) - 1)
    known_ids = {r.index for r in normals[:n_known]}
    known = [r for r in records if r.index in known_ids]
    test = [r for r in records if r.index not in known_ids]
    return known, test


def sample_known_uniques(unique_texts: Sequence[str], ratio: float, seed: int) -> list[str]:
    """Keep a seeded fraction of the unique known-normal sequences.

    Subsets are nested across ratios for the same seed, and first-seen
    order is preserved among the kept texts.
    """
    require(0.0 < ratio <= 1.0, f"known ratio must be in (0, 1], got {ratio}")
    n = len(unique_texts)
    count = min(n, max(1, math.ceil(ratio * n - 1e-9)))
    if count == n:
        return list(unique_texts)
    perm = np.random.default_rng(seed).permutation(n)
    keep = set(int(i) for i in perm[:count])
    return [t for i, t in enumerate(unique_texts) if i in keep]


_AXES = ("core_ratio", "known_ratio", "score_mode", "feature_mode")


@dataclass(frozen=True)
class AblationCell:
    """One ablation configuration and its evaluation."""

    axis: str
    value: object
    report: EvalReport
    n_documents: int
    k: int
    queries: int
    pair_scores: int
    scoring_seconds: float
    wall_seconds: float

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "value": self.value,
            "n_documents": self.n_documents,
            "k": self.k,
            "queries": self.queries,
            "pair_scores": self.pair_scores,
            "scoring_seconds": self.scoring_seconds,
            "wall_seconds": self.wall_seconds,
            **self.report.to_dict(),
        }


def ablate(
    records: Sequence[RawLogRecord],
    axis: str,
    values: Sequence,
    config: RunConfig | None = None,
    seed: int = 0,
    known_fraction: float = 0.8,
) -> list[AblationCell]:
    """Run the detection pipeline once per value along one ablation axis.

    Axes: "core_ratio" (core-set fraction), "known_ratio" (seeded
    subsampling of the unique known-normal sequences before indexing),
    "score_mode" and "feature_mode". Each cell splits the corpus the
    same way, builds its document set, scores the full test part and
    evaluates with the best-F1 sweep. Same seed, same cells.
    """
    require(axis in _AXES, f"axis must be one of {_AXES}, got {axis!r}")
    require(len(values) > 0, "no ablation values given")
    config = config or RunConfig()

    known, test = split_corpus(records, known_fraction)
    known_sequences = apply_masks(known, config.rules)
    unique_known = list(dict.fromkeys(s.text for s in known_sequences))
    test_sequences = apply_masks(test, config.rules)
    test_labels = [r.label for r in test]

    cells = []
    for value in values:
        wall_start = perf_counter()
        core = config.core
        kept = unique_known
        if axis == "core_ratio":
            core = replace(core, k=None, ratio=float(value))
        elif axis == "score_mode":
            core = replace(core, score_mode=str(value))
        elif axis == "feature_mode":
            core = replace(core, feature_mode=str(value))
        else:
            kept = sample_known_uniques(unique_known, float(value), seed)

        db, _ = build_db(kept)
        doc_embeddings = embed_batch(db, config.provider)
        engine = ScoringEngine(doc_embeddings, core)

        q_db, lookup = build_db(test_sequences)
        scores = engine.score(embed_batch(q_db, config.provider), config.workers)
        results = allocate(scores, lookup, threshold=math.inf)
        pairs = [LabeledScore(r.abnormal_score, lab)
                 for r, lab in zip(results, test_labels)]
        report = evaluate(pairs, config={
            "axis": axis, "value": value, **core.snapshot(engine.k),
            "provider": config.provider.provider, "dim": engine.dim,
            "seed": seed, "known_fraction": known_fraction,
        })
        cells.append(AblationCell(
            axis=axis, value=value, report=report,
            n_documents=len(db), k=engine.k,
            queries=engine.stats.queries_scored,
            pair_scores=engine.stats.pair_scores,
            scoring_seconds=engine.stats.scoring_seconds,
            wall_seconds=perf_counter() - wall_start,
        ))
    return cells


def render_cells(cells: Sequence[AblationCell], fmt: str = "json") -> str:
    """Render ablation cells as "json", "csv" or aligned "text"."""
    require(fmt in ("json", "csv", "text"), f"unknown report format {fmt!r}")
    rows = [cell.to_dict() for cell in cells]
    for row in rows:
        row.pop("config", None)
    if fmt == "json":
        return json.dumps({"cells": rows}, indent=2)
    columns = ["axis", "value", "n_documents", "k", "queries", "best_f1",
               "best_delta", "auroc", "precision", "recall", "f1",
               "scoring_seconds"]
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=columns, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return out.getvalue()
    formatted = [[_fmt_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(f[i]) for f in formatted)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    for f in formatted:
        lines.append("  ".join(v.rjust(w) for v, w in zip(f, widths)))
    return "\n".join(lines) + "\n"


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)
