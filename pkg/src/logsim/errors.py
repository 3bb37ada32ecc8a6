"""Exception types raised across the package.

Binary file problems are split into distinct classes (bad magic, bad
version, checksum mismatch, truncation) so callers and the CLI can
report the precise failure instead of a generic "corrupt file".
"""

from __future__ import annotations


class LogsimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LogsimError, ValueError):
    """Invalid configuration: bad mask rule, bad core-set parameters, etc."""


class ParseError(LogsimError, ValueError):
    """A raw input line could not be parsed.

    Carries the 1-based line number of the offending input line.
    """

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RecordRejectedError(ParseError):
    """A structurally valid line produced an unusable record (e.g. empty text)."""

    def __init__(self, message: str, line_no: int, index: int):
        super().__init__(message, line_no)
        self.index = index


class IntegrityError(LogsimError):
    """Cross-structure invariant violated (lookup refers to a missing entry, ...)."""


class AllocationError(IntegrityError):
    """A lookup table references a sequence id that has no score."""

    def __init__(self, seq_id: int):
        super().__init__(f"no score available for seq_id {seq_id}")
        self.seq_id = seq_id


class FileFormatError(LogsimError):
    """Base class for binary file format violations."""


class MagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FileFormatError):
    """File declares an unsupported format version."""


class ChecksumError(FileFormatError):
    """Trailing CRC32C does not match the file contents."""


class TruncatedFileError(FileFormatError):
    """File ends before its declared contents. Carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimensionMismatchError(FileFormatError):
    """Embedding file dimensionality disagrees with the requested configuration."""


class EmbeddingCoverageError(LogsimError):
    """An embedding source is missing rows for required sequence ids."""

    def __init__(self, missing: list[int]):
        shown = ", ".join(str(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        super().__init__(f"embeddings missing for seq_ids: {shown}{more}")
        self.missing = list(missing)


class ValidationError(LogsimError, ValueError):
    """Numeric payload failed validation (non-finite rows, zero rows, ...)."""


class MetricError(LogsimError, ValueError):
    """Metric undefined for the given input (single-class AUROC, empty quantile)."""
