"""Late-interaction scoring of queries against a set of known documents.

The similarity between a query matrix Q and a document matrix D is the
sum over query rows of the best cosine match among document rows:

    sim(Q, D) = sum_i max_j cos(Q_i, D_j)            aggregation "sum"
    sim(Q, D) = (1/|Q|) sum_i max_j cos(Q_i, D_j)    aggregation "mean"

and the distance is 1 - sim(Q, D). Under "sum" a self-match scores
1 - row_count(Q), so distances can be negative; "mean" rescales by the
query row count, which keeps distances comparable across lengths.

A query is scored only against its core set: the k documents whose
summary rows are Euclidean-nearest to the query's summary row. The
abnormal score is the smallest core-set distance ("nearest_only") or
the core-set average ("core_set_mean").

All cosine kernels funnel through one einsum-based routine whose
per-element accumulation order does not depend on how documents are
batched, so a score computed one document at a time is bit-identical
to the same score computed from a concatenated batch. BLAS matrix
products do not have that property, which is why they are confined to
the summary-row KNN where only the ordering matters.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import Mapping

import numpy as np

from .embed import EmbeddedSequence
from .errors import ConfigError, ValidationError
from .validation import require

__all__ = [
    "CoreSetConfig",
    "ScoreRecord",
    "ScoringStats",
    "ScoringEngine",
    "maxsim",
    "maxsim_distance",
    "knn_core",
    "abnormal_score",
    "brute_force_score",
]

FEATURE_MODES = ("all_tokens", "cls_only")
SCORE_MODES = ("nearest_only", "core_set_mean")
AGGREGATIONS = ("sum", "mean")

_DEFAULT_RATIO = 0.01
# Guards float artifacts like 0.3 * 10 == 3.0000000000000004 from bumping
# ceil() to the next integer.
_RATIO_EPS = 1e-9


@dataclass(frozen=True)
class CoreSetConfig:
    """Core-set size and scoring modes.

    Exactly one of ``k`` (absolute size) and ``ratio`` (fraction of the
    document count, k = max(1, ceil(ratio * n))) may be set; with
    neither set the ratio defaults to 0.01. Sizes are clamped to the
    number of documents.
    """

    k: int | None = None
    ratio: float | None = None
    feature_mode: str = "all_tokens"
    score_mode: str = "nearest_only"
    aggregation: str = "sum"

    def __post_init__(self) -> None:
        require(not (self.k is not None and self.ratio is not None),
                "set either k or ratio, not both")
        if self.k is not None:
            require(self.k >= 1, f"k must be >= 1, got {self.k}")
        if self.ratio is not None:
            require(0.0 < self.ratio <= 1.0, f"ratio must be in (0, 1], got {self.ratio}")
        require(self.feature_mode in FEATURE_MODES,
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        require(self.score_mode in SCORE_MODES,
                f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")
        require(self.aggregation in AGGREGATIONS,
                f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")

    def resolve_k(self, n_docs: int) -> int:
        require(n_docs >= 1, "cannot resolve a core-set size for an empty document set")
        if self.k is not None:
            return min(self.k, n_docs)
        ratio = _DEFAULT_RATIO if self.ratio is None else self.ratio
        return min(n_docs, max(1, math.ceil(ratio * n_docs - _RATIO_EPS)))

    def snapshot(self, resolved_k: int | None = None) -> dict:
        return {
            "k": resolved_k if resolved_k is not None else self.k,
            "ratio": self.ratio,
            "feature_mode": self.feature_mode,
            "score_mode": self.score_mode,
            "aggregation": self.aggregation,
        }


@dataclass(frozen=True)
class ScoreRecord:
    """Scoring outcome for one unique query sequence."""

    query_seq_id: int
    abnormal_score: float
    nearest_doc_id: int
    core_set_ids: tuple[int, ...]
    config: dict


@dataclass
class ScoringStats:
    """Counters for one or more scoring passes."""

    queries_scored: int = 0
    pair_scores: int = 0
    scoring_seconds: float = 0.0

    def merge(self, other: "ScoringStats") -> None:
        self.queries_scored += other.queries_scored
        self.pair_scores += other.pair_scores
        self.scoring_seconds += other.scoring_seconds


def _rows_of(x) -> np.ndarray:
    rows = x.rows if isinstance(x, EmbeddedSequence) else np.asarray(x, dtype=np.float32)
    if rows.dtype != np.float32:
        rows = rows.astype(np.float32)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValidationError("embedding rows must form a non-empty 2-D matrix")
    return rows


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float32)
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
        raise ValidationError("rows must be finite and non-zero to take cosines")
    return rows / norms[:, None]


def _pair_sims(query_units: np.ndarray, doc_units: np.ndarray) -> np.ndarray:
    # einsum keeps each output element's accumulation order fixed no matter
    # how wide the operands are; this is the batching-independence anchor.
    return np.einsum("id,jd->ij", query_units, doc_units)


def maxsim(q, d, aggregation: str = "sum") -> float:
    """Late-interaction similarity between two row matrices.

    Accepts EmbeddedSequences or plain 2-D arrays. Row maxima are summed
    in float64; "mean" divides by the query row count.
    """
    require(aggregation in AGGREGATIONS, f"unknown aggregation {aggregation!r}")
    qu = _unit_rows(_rows_of(q))
    du = _unit_rows(_rows_of(d))
    if qu.shape[1] != du.shape[1]:
        raise ValidationError(f"dim mismatch: query {qu.shape[1]} vs document {du.shape[1]}")
    best = _pair_sims(qu, du).max(axis=1)
    total = float(best.sum(dtype=np.float64))
    if aggregation == "mean":
        total = total / qu.shape[0]
    return total


def maxsim_distance(q, d, aggregation: str = "sum") -> float:
    """1 - maxsim(q, d, aggregation). Negative under "sum" for strong matches."""
    return 1.0 - maxsim(q, d, aggregation)


def _knn_positions(qcls: np.ndarray, cls_mat: np.ndarray, dd: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k nearest rows of cls_mat to qcls, squared-Euclidean.

    Ties are broken toward the lower position, which corresponds to the
    lower seq_id because callers keep rows in ascending-id order.
    """
    sims = cls_mat @ qcls
    d2 = (dd - 2.0 * sims) + np.float32(np.dot(qcls, qcls))
    n = d2.shape[0]
    if k >= n:
        return np.lexsort((np.arange(n), d2))
    kth = np.partition(d2, k - 1)[k - 1]
    cand = np.flatnonzero(d2 <= kth)
    order = np.lexsort((cand, d2[cand]))
    return cand[order[:k]]


def knn_core(q: EmbeddedSequence, docs: Mapping[int, EmbeddedSequence], config: CoreSetConfig) -> list[int]:
    """Ids of the core-set documents for ``q``, nearest first.

    Distance is Euclidean between raw summary rows. Ties go to the lower
    seq_id. For repeated scoring against the same documents use
    ScoringEngine, which prepares the document arrays once.
    """
    require(len(docs) >= 1, "document set is empty")
    ids = np.fromiter(sorted(docs), dtype=np.int64, count=len(docs))
    cls_mat = np.ascontiguousarray(
        np.stack([docs[int(i)].rows[0] for i in ids]), dtype=np.float32
    )
    dd = np.einsum("ij,ij->i", cls_mat, cls_mat)
    qcls = np.ascontiguousarray(_rows_of(q)[0], dtype=np.float32)
    k = config.resolve_k(len(ids))
    positions = _knn_positions(qcls, cls_mat, dd, k)
    return [int(ids[p]) for p in positions]


class ScoringEngine:
    """Scores query sequences against a fixed embedded document set.

    Document rows are unit-normalized and concatenated once at
    construction; each query then needs one summary-row KNN pass and one
    batched cosine kernel over its core set. Queries are independent, so
    results are identical for any worker count.
    """

    def __init__(self, docs: Mapping[int, EmbeddedSequence], config: CoreSetConfig):
        require(len(docs) >= 1, "document set is empty")
        self.config = config
        self.ids = np.fromiter(sorted(docs), dtype=np.int64, count=len(docs))
        seqs = [docs[int(i)] for i in self.ids]
        dims = {s.rows.shape[1] for s in seqs}
        if len(dims) != 1:
            raise ValidationError(f"documents have mixed dims: {sorted(dims)}")
        self.dim = dims.pop()
        self.k = config.resolve_k(len(seqs))
        self._cls = np.ascontiguousarray(np.stack([s.rows[0] for s in seqs]), dtype=np.float32)
        self._dd = np.einsum("ij,ij->i", self._cls, self._cls)
        if config.feature_mode == "all_tokens":
            mats = [_unit_rows(s.rows) for s in seqs]
        else:
            mats = [_unit_rows(s.rows[0:1]) for s in seqs]
        self._rows_per = np.fromiter((m.shape[0] for m in mats), dtype=np.int64, count=len(mats))
        self._offsets = np.zeros(len(mats) + 1, dtype=np.int64)
        np.cumsum(self._rows_per, out=self._offsets[1:])
        self._cat = np.concatenate(mats, axis=0)
        self.stats = ScoringStats()

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def _score_one(self, qid: int, q: EmbeddedSequence) -> ScoreRecord:
        qrows = _rows_of(q)
        if qrows.shape[1] != self.dim:
            raise ValidationError(f"query {qid}: dim {qrows.shape[1]} != document dim {self.dim}")
        qcls = np.ascontiguousarray(qrows[0], dtype=np.float32)
        qu = _unit_rows(qrows if self.config.feature_mode == "all_tokens" else qrows[0:1])

        positions = _knn_positions(qcls, self._cls, self._dd, self.k)
        core_ids = self.ids[positions]
        lens = self._rows_per[positions]
        starts = np.zeros(len(positions), dtype=np.int64)
        np.cumsum(lens[:-1], out=starts[1:])
        gathered = self._cat[np.repeat(self._offsets[positions] - starts, lens)
                             + np.arange(int(lens.sum()))]

        sims = np.maximum.reduceat(_pair_sims(qu, gathered), starts, axis=1)
        sums = sims.sum(axis=0, dtype=np.float64)
        if self.config.aggregation == "mean":
            sums = sums / qu.shape[0]
        distances = 1.0 - sums

        if self.config.score_mode == "nearest_only":
            score = float(distances.min())
        else:
            score = float(distances.mean())
        nearest = int(core_ids[np.lexsort((core_ids, distances))[0]])
        return ScoreRecord(
            query_seq_id=qid,
            abnormal_score=score,
            nearest_doc_id=nearest,
            core_set_ids=tuple(int(i) for i in core_ids),
            config=self.config.snapshot(self.k),
        )

    def score(
        self,
        queries: Mapping[int, EmbeddedSequence],
        workers: int = 1,
    ) -> dict[int, ScoreRecord]:
        """Score every query, keyed by its id in ``queries``."""
        require(workers >= 1, f"workers must be >= 1, got {workers}")
        qids = sorted(queries)
        start = perf_counter()
        if workers == 1 or len(qids) < 2:
            records = [self._score_one(qid, queries[qid]) for qid in qids]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(self._score_one, qids, (queries[q] for q in qids)))
        self.stats.queries_scored += len(qids)
        self.stats.pair_scores += len(qids) * self.k
        self.stats.scoring_seconds += perf_counter() - start
        return {qid: record for qid, record in zip(qids, records)}


def abnormal_score(
    q: EmbeddedSequence,
    docs: Mapping[int, EmbeddedSequence],
    config: CoreSetConfig,
) -> ScoreRecord:
    """Score one query against its core set. One-shot ScoringEngine wrapper."""
    engine = ScoringEngine(docs, config)
    return engine.score({q.seq_id: q})[q.seq_id]


def brute_force_score(
    q: EmbeddedSequence,
    docs: Mapping[int, EmbeddedSequence],
    feature_mode: str = "all_tokens",
    aggregation: str = "sum",
) -> ScoreRecord:
    """Minimum distance over every document, bypassing core-set pruning.

    The reference for core-set correctness: a plain loop over documents
    in ascending id order using the pairwise kernel directly. With
    k == len(docs), abnormal_score must reproduce this bit-for-bit.
    """
    require(len(docs) >= 1, "document set is empty")
    require(feature_mode in FEATURE_MODES, f"unknown feature_mode {feature_mode!r}")
    ids = sorted(docs)
    best_dist = math.inf
    best_id = -1
    for seq_id in ids:
        d = docs[seq_id]
        if feature_mode == "cls_only":
            dist = maxsim_distance(q.rows[0:1], d.rows[0:1], aggregation)
        else:
            dist = maxsim_distance(q, d, aggregation)
        if dist < best_dist:
            best_dist = dist
            best_id = seq_id
    return ScoreRecord(
        query_seq_id=q.seq_id,
        abnormal_score=best_dist,
        nearest_doc_id=best_id,
        core_set_ids=tuple(ids),
        config={
            "k": len(ids),
            "ratio": None,
            "feature_mode": feature_mode,
            "score_mode": "nearest_only",
            "aggregation": aggregation,
        },
    )
