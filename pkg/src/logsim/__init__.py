"""Training-free log anomaly detection by retrieval over known-normal logs.

The pipeline: raw records are parameter-masked into canonical sequences,
deduplicated into a store of known-normal documents, embedded row-per-token,
and each test sequence is scored by its distance to the nearest documents
(late-interaction maximum-cosine matching, pruned by a summary-row KNN).
Records sharing a sequence share its score; a score at or above the
threshold flags the record as abnormal.
"""

from .detector import (
    DetectionResult,
    LogAnomalyDetector,
    RunConfig,
    ThresholdPolicy,
    allocate,
    choose_threshold,
    detect_period,
)
from .embed import (
    EmbeddedSequence,
    ProviderConfig,
    embed_batch,
    hash_embed,
    read_embedding_file,
    write_embedding_file,
)
from .errors import (
    AllocationError,
    ChecksumError,
    ConfigError,
    DimensionMismatchError,
    EmbeddingCoverageError,
    FileFormatError,
    IntegrityError,
    LogsimError,
    MagicError,
    MetricError,
    ParseError,
    RecordRejectedError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)
from .evaluation import (
    AblationCell,
    CoverageReport,
    EvalReport,
    LabeledScore,
    PRF1Result,
    ablate,
    auroc,
    auroc_pairwise,
    best_f1_sweep,
    coverage,
    evaluate,
    prf1,
    render_cells,
    sample_known_uniques,
    split_corpus,
)
from .ingest import (
    DEFAULT_MASK_RULES,
    MaskRule,
    ProcessedSequence,
    RawLogRecord,
    apply_masks,
    compile_rules,
    gen_synthetic,
    load_rules,
    parse_records,
)
from .retrieval import (
    CoreSetConfig,
    ScoreRecord,
    ScoringEngine,
    ScoringStats,
    abnormal_score,
    brute_force_score,
    knn_core,
    maxsim,
    maxsim_distance,
)
from .store import (
    BlockView,
    SequenceDB,
    block_labels,
    build_block_views,
    build_db,
    load_db,
    save_db,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # ingest
    "RawLogRecord", "MaskRule", "ProcessedSequence", "DEFAULT_MASK_RULES",
    "compile_rules", "load_rules", "parse_records", "apply_masks", "gen_synthetic",
    # store
    "SequenceDB", "BlockView", "build_db", "build_block_views", "block_labels",
    "save_db", "load_db",
    # embed
    "ProviderConfig", "EmbeddedSequence", "hash_embed", "embed_batch",
    "write_embedding_file", "read_embedding_file",
    # retrieval
    "CoreSetConfig", "ScoreRecord", "ScoringStats", "ScoringEngine",
    "maxsim", "maxsim_distance", "knn_core", "abnormal_score", "brute_force_score",
    # detector
    "ThresholdPolicy", "DetectionResult", "RunConfig", "LogAnomalyDetector",
    "choose_threshold", "allocate", "detect_period",
    # evaluation
    "LabeledScore", "PRF1Result", "EvalReport", "CoverageReport", "AblationCell",
    "prf1", "best_f1_sweep", "auroc", "auroc_pairwise", "evaluate", "coverage",
    "split_corpus", "sample_known_uniques", "ablate", "render_cells",
    # errors
    "LogsimError", "ConfigError", "ParseError", "RecordRejectedError",
    "IntegrityError", "AllocationError", "FileFormatError", "MagicError",
    "VersionError", "ChecksumError", "TruncatedFileError",
    "DimensionMismatchError", "EmbeddingCoverageError", "ValidationError",
    "MetricError",
]
