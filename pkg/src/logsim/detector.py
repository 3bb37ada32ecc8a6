"""Turning retrieval scores into per-record anomaly decisions.

Detection is training-free: the known-normal logs are deduplicated,
embedded once, and every test sequence is scored by its distance to the
nearest core-set document. A record is flagged abnormal when its score
reaches the decision threshold (boundary inclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .embed import EmbeddedSequence, ProviderConfig, embed_batch
from .errors import AllocationError, ConfigError, MetricError
from .ingest import MaskRule, RawLogRecord, apply_masks
from .retrieval import CoreSetConfig, ScoreRecord, ScoringEngine, ScoringStats
from .store import SequenceDB, build_block_views, build_db
from .validation import as_text_list, check_fitted, require

__all__ = [
    "ThresholdPolicy",
    "DetectionResult",
    "RunConfig",
    "choose_threshold",
    "allocate",
    "detect_period",
    "LogAnomalyDetector",
]


@dataclass(frozen=True)
class ThresholdPolicy:
    """Decision threshold selection.

    "fixed" uses ``value`` verbatim. "normal_quantile" places the
    threshold at the ``value`` quantile (linear interpolation) of scores
    observed on a known-normal hold-out.
    """

    kind: str = "normal_quantile"
    value: float = 0.999

    def __post_init__(self) -> None:
        require(self.kind in ("fixed", "normal_quantile"),
                f"unknown threshold policy {self.kind!r}")
        if self.kind == "normal_quantile":
            require(0.0 <= self.value <= 1.0,
                    f"quantile must be in [0, 1], got {self.value}")


def choose_threshold(scores: Sequence[float], policy: ThresholdPolicy) -> float:
    """Resolve a policy against known-normal scores."""
    if policy.kind == "fixed":
        return float(policy.value)
    if len(scores) == 0:
        raise MetricError("quantile threshold needs at least one known-normal score")
    return float(np.quantile(np.asarray(scores, dtype=np.float64), policy.value,
                             method="linear"))


@dataclass(frozen=True)
class DetectionResult:
    """Decision for one record (or one block member in block mode)."""

    record_index: int
    abnormal_score: float
    prediction: int
    threshold: float
    seq_id: int | None = None
    block_id: str | None = None
    nearest_doc_id: int | None = None


def allocate(
    scores: Mapping[int, ScoreRecord] | Mapping[int, float],
    lookup: Sequence[int],
    threshold: float,
    record_indices: Sequence[int] | None = None,
) -> list[DetectionResult]:
    """Fan per-sequence scores out to every record via the lookup table.

    A record is predicted abnormal when its score is >= the threshold.
    A threshold of +inf means score-only (nothing is flagged). Raises
    AllocationError if the lookup references an unscored id.
    """
    require(not math.isnan(threshold), "threshold must not be NaN")
    if record_indices is not None and len(record_indices) != len(lookup):
        raise ConfigError("record_indices and lookup are not aligned")
    results = []
    for pos, seq_id in enumerate(lookup):
        if seq_id not in scores:
            raise AllocationError(seq_id)
        entry = scores[seq_id]
        if isinstance(entry, ScoreRecord):
            score, nearest = entry.abnormal_score, entry.nearest_doc_id
        else:
            score, nearest = float(entry), None
        results.append(DetectionResult(
            record_index=record_indices[pos] if record_indices is not None else pos,
            abnormal_score=score,
            prediction=int(score >= threshold),
            threshold=threshold,
            seq_id=seq_id,
            nearest_doc_id=nearest,
        ))
    return results


@dataclass
class RunConfig:
    """Everything a detection run needs besides the documents themselves."""

    rules: list[MaskRule] | None = None
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    core: CoreSetConfig = field(default_factory=CoreSetConfig)
    block_mode: bool = False
    period_size: int | None = None
    workers: int = 1
    query_source: str | None = None

    def __post_init__(self) -> None:
        if self.period_size is not None:
            require(self.period_size >= 1, "period_size must be >= 1")
            require(not self.block_mode, "period_size is not supported in block mode")
            require(self.query_source is None,
                    "period_size cannot be combined with precomputed query embeddings")
        require(self.workers >= 1, "workers must be >= 1")


def _query_embeddings(q_db: SequenceDB, config: RunConfig) -> dict[int, EmbeddedSequence]:
    if len(q_db) == 0:
        return {}
    provider = config.provider
    if provider.provider == "file":
        require(config.query_source is not None,
                "file provider needs query_source for test embeddings")
        provider = ProviderConfig(
            provider="file",
            dim=provider.dim,
            max_tokens=provider.max_tokens,
            seed=provider.seed,
            normalize_rows=provider.normalize_rows,
            source=config.query_source,
        )
    return embed_batch(q_db, provider)


def detect_period(
    records: Sequence[RawLogRecord],
    db: SequenceDB,
    doc_embeddings: Mapping[int, EmbeddedSequence],
    config: RunConfig,
    threshold: float,
    stats: ScoringStats | None = None,
) -> list[DetectionResult]:
    """Score a period of test records against the known-normal documents.

    Test records are masked, deduplicated and embedded once per unique
    sequence; scores are then allocated back to every record. In block
    mode each block's canonical text is scored once and every member
    record inherits the block's score and prediction. Pass a
    ScoringStats to observe how many scoring passes actually ran.

    ``db`` is accepted alongside the embeddings for interface symmetry
    and future cross-checks; scoring itself only needs the embeddings.
    """
    del db
    engine = ScoringEngine(doc_embeddings, config.core)
    results: list[DetectionResult] = []

    if config.block_mode:
        sequences = apply_masks(records, config.rules)
        views = build_block_views(records, sequences)
        q_db, view_lookup = build_db(view.canonical_text for view in views)
        scores = engine.score(_query_embeddings(q_db, config), config.workers)
        for view, qid in zip(views, view_lookup):
            record = scores[qid]
            for record_index in view.member_indices:
                results.append(DetectionResult(
                    record_index=record_index,
                    abnormal_score=record.abnormal_score,
                    prediction=int(record.abnormal_score >= threshold),
                    threshold=threshold,
                    block_id=view.block_id,
                    nearest_doc_id=record.nearest_doc_id,
                ))
        results.sort(key=lambda r: r.record_index)
    else:
        step = config.period_size or max(len(records), 1)
        for start in range(0, len(records), step):
            chunk = records[start:start + step]
            sequences = apply_masks(chunk, config.rules)
            q_db, lookup = build_db(sequences)
            scores = engine.score(_query_embeddings(q_db, config), config.workers)
            results.extend(allocate(
                scores, lookup, threshold,
                record_indices=[r.index for r in chunk],
            ))
    if stats is not None:
        stats.merge(engine.stats)
    return results


class LogAnomalyDetector(BaseEstimator):
    """Anomaly detector over raw log lines, in scikit-learn estimator style.

    ``fit`` ingests known-normal logs: they are masked, deduplicated and
    embedded into the document set. ``score_samples`` returns an
    abnormal score per input line (higher means more anomalous) and
    ``predict`` applies the decision threshold (1 = abnormal). There is
    no gradient training; fitting is indexing.

    With the default "normal_quantile" policy, fit holds out a seeded
    fraction of the unique known-normal sequences, scores them against
    the rest, and places the threshold at the requested quantile of
    those hold-out scores. The final index still contains every unique
    sequence; the hold-out only calibrates the threshold. Use
    ``threshold_policy="fixed"`` to supply a threshold directly.

    >>> detector = LogAnomalyDetector(dim=32, threshold_policy="fixed",
    ...                               threshold_value=0.5, aggregation="mean")
    >>> detector.fit(["service a started", "service b started"])
    LogAnomalyDetector(aggregation='mean', dim=32, threshold_policy='fixed',
                       threshold_value=0.5)
    >>> detector.predict(["service a started", "disk failure imminent"]).tolist()
    [0, 1]
    """

    def __init__(
        self,
        *,
        rules: list[MaskRule] | None = None,
        dim: int = 64,
        max_tokens: int = 128,
        seed: int = 0,
        core_k: int | None = None,
        core_ratio: float | None = None,
        feature_mode: str = "all_tokens",
        score_mode: str = "nearest_only",
        aggregation: str = "sum",
        threshold_policy: str = "normal_quantile",
        threshold_value: float = 0.999,
        calibration_fraction: float = 0.1,
        workers: int = 1,
    ):
        self.rules = rules
        self.dim = dim
        self.max_tokens = max_tokens
        self.seed = seed
        self.core_k = core_k
        self.core_ratio = core_ratio
        self.feature_mode = feature_mode
        self.score_mode = score_mode
        self.aggregation = aggregation
        self.threshold_policy = threshold_policy
        self.threshold_value = threshold_value
        self.calibration_fraction = calibration_fraction
        self.workers = workers

    def _provider_config(self) -> ProviderConfig:
        return ProviderConfig(provider="hash", dim=self.dim,
                              max_tokens=self.max_tokens, seed=self.seed)

    def _core_config(self) -> CoreSetConfig:
        return CoreSetConfig(k=self.core_k, ratio=self.core_ratio,
                             feature_mode=self.feature_mode,
                             score_mode=self.score_mode,
                             aggregation=self.aggregation)

    def fit(self, X: Iterable[str], y=None):
        """Index known-normal log lines. ``y`` is ignored."""
        texts = as_text_list(X)
        require(len(texts) >= 1, "fit needs at least one known-normal log line")
        records = [RawLogRecord(i, t) for i, t in enumerate(texts)]
        sequences = apply_masks(records, self.rules)
        unique_texts = list(dict.fromkeys(s.text for s in sequences))
        policy = ThresholdPolicy(self.threshold_policy, self.threshold_value)

        self.store_, _ = build_db(unique_texts)
        self.embeddings_ = embed_batch(self.store_, self._provider_config())
        self.engine_ = ScoringEngine(self.embeddings_, self._core_config())

        if policy.kind == "fixed":
            self.threshold_ = float(policy.value)
            self.calibration_scores_ = np.empty(0, dtype=np.float64)
        else:
            require(0.0 < self.calibration_fraction < 1.0,
                    "normal_quantile policy needs calibration_fraction in (0, 1)")
            n_cal = max(1, round(self.calibration_fraction * len(unique_texts)))
            require(len(unique_texts) - n_cal >= 1,
                    "not enough distinct sequences to hold out a calibration split; "
                    "use threshold_policy='fixed'")
            picks = np.random.default_rng(self.seed).permutation(len(unique_texts))[:n_cal]
            held_out = set(int(i) for i in picks)
            cal_set = {t for i, t in enumerate(unique_texts) if i in held_out}
            doc_db, _ = build_db([t for t in unique_texts if t not in cal_set])
            cal_engine = ScoringEngine(embed_batch(doc_db, self._provider_config()),
                                       self._core_config())
            cal_db, _ = build_db(sorted(cal_set))
            scores = cal_engine.score(embed_batch(cal_db, self._provider_config()),
                                      self.workers)
            per_record = [scores[cal_db.get_id(s.text)].abnormal_score
                          for s in sequences if s.text in cal_set]
            self.calibration_scores_ = np.asarray(per_record, dtype=np.float64)
            self.threshold_ = choose_threshold(per_record, policy)
        self.n_documents_ = len(self.store_)
        return self

    def score_samples(self, X: Iterable[str]) -> np.ndarray:
        """Abnormal score per input line; higher means more anomalous."""
        check_fitted(self, "engine_")
        texts = as_text_list(X)
        records = [RawLogRecord(i, t) for i, t in enumerate(texts)]
        sequences = apply_masks(records, self.rules)
        q_db, lookup = build_db(sequences)
        scores = self.engine_.score(embed_batch(q_db, self._provider_config()),
                                    self.workers)
        return np.asarray([scores[sid].abnormal_score for sid in lookup],
                          dtype=np.float64)

    def predict(self, X: Iterable[str]) -> np.ndarray:
        """1 for lines scored at or above the threshold, else 0."""
        scores = self.score_samples(X)
        return (scores >= self.threshold_).astype(np.int64)
