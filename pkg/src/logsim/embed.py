"""Per-sequence embeddings: one matrix per unique sequence.

Row 0 of every matrix is a summary (CLS) row; rows 1..n correspond to
the sequence tokens in order. Matrices are float32. Two providers are
supported:

  hash  Deterministic pseudo-embeddings: each distinct token maps to a
        fixed unit vector drawn from a counter-based generator keyed by
        a stable hash of (seed, token); the summary row is the
        L2-normalized mean of the token rows. Needs no model or
        network and is reproducible across runs and hosts.

  file  Reads matrices produced elsewhere (e.g. by a transformer
        encoder) from the embedding container format below.

File layout (little-endian), checksummed with a trailing CRC32C over
every preceding byte:

    magic "RPDE" | version u32 | dim u32 | seq_count u64
    per sequence (ascending seq_id):
        seq_id u64 | row_count u32 | row_count * dim float32, row-major
    crc32c u32
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .binio import Cursor, crc32c, pack_u32, pack_u64
from .errors import (
    ChecksumError,
    DimensionMismatchError,
    EmbeddingCoverageError,
    FileFormatError,
    MagicError,
    ValidationError,
    VersionError,
)
from .store import SequenceDB
from .validation import require

__all__ = [
    "ProviderConfig",
    "EmbeddedSequence",
    "hash_embed",
    "embed_batch",
    "write_embedding_file",
    "read_embedding_file",
]

_MAGIC = b"RPDE"
_VERSION = 1


@dataclass(frozen=True)
class ProviderConfig:
    """How sequences get their embedding matrices.

    ``dim`` may be None for the file provider to adopt the file's
    dimensionality; when set it must match. ``max_tokens`` caps rows per
    sequence: sequences longer than ``max_tokens - 1`` tokens are
    truncated (tail dropped) before embedding, so row counts never
    exceed ``max_tokens``.
    """

    provider: str = "hash"
    dim: int | None = 64
    max_tokens: int = 128
    seed: int = 0
    normalize_rows: bool = True
    source: str | None = None

    def __post_init__(self) -> None:
        require(self.provider in ("hash", "file"), f"unknown provider {self.provider!r}")
        require(self.max_tokens >= 2, "max_tokens must be >= 2 (summary row plus one token)")
        if self.provider == "hash":
            require(self.dim is not None and self.dim >= 1, "hash provider needs dim >= 1")
        else:
            require(self.source is not None, "file provider needs a source path")
            require(self.dim is None or self.dim >= 1, "dim must be >= 1 when set")


@dataclass(frozen=True)
class EmbeddedSequence:
    """A (1 + token_count) x dim float32 matrix; row 0 is the summary row."""

    seq_id: int
    rows: np.ndarray = field(compare=False)

    @property
    def token_count(self) -> int:
        return self.rows.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x1f{token}".encode("utf-8"), digest_size=16).digest()
    key = int.from_bytes(digest, "little")
    gen = np.random.Generator(np.random.Philox(key=key))
    vec = gen.standard_normal(dim, dtype=np.float32)
    norm = np.float32(np.sqrt(np.dot(vec, vec)))
    if norm == 0.0:
        raise ValidationError(f"degenerate token vector for {token!r}")
    return vec / norm


def hash_embed(
    tokens: list[str] | tuple[str, ...],
    dim: int,
    seed: int,
    _cache: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Embed a token sequence as unit rows plus a normalized-mean summary row.

    The same (token, dim, seed) always yields the same row, so identical
    sequences embed identically across processes and hosts.
    """
    require(len(tokens) >= 1, "cannot embed an empty token sequence", ValidationError)
    cache = _cache if _cache is not None else {}
    rows = np.empty((1 + len(tokens), dim), dtype=np.float32)
    for pos, token in enumerate(tokens, start=1):
        vec = cache.get(token)
        if vec is None:
            vec = _token_vector(token, dim, seed)
            cache[token] = vec
        rows[pos] = vec
    summary = rows[1:].mean(axis=0)
    norm = np.float32(np.sqrt(np.dot(summary, summary)))
    if norm == 0.0:
        raise ValidationError("token rows cancel to a zero summary row")
    rows[0] = summary / norm
    return rows


def _validate_rows(seq_id: int, rows: np.ndarray, max_tokens: int) -> None:
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValidationError(f"seq_id {seq_id}: embedding matrix must be 2-D and non-empty")
    if rows.shape[0] > max_tokens:
        raise ValidationError(
            f"seq_id {seq_id}: {rows.shape[0]} rows exceed max_tokens {max_tokens}"
        )
    if not np.all(np.isfinite(rows)):
        raise ValidationError(f"seq_id {seq_id}: embedding matrix has non-finite entries")


def embed_batch(db: SequenceDB, config: ProviderConfig) -> dict[int, EmbeddedSequence]:
    """Embed every unique sequence in ``db``, keyed by seq_id.

    The file provider requires the source to cover every id in the
    database (extra ids in the file are ignored) and, when
    ``normalize_rows`` is set, rescales each row to unit L2 norm so that
    cosine reduces to a dot product downstream.
    """
    out: dict[int, EmbeddedSequence] = {}
    if config.provider == "hash":
        cache: dict[str, np.ndarray] = {}
        for seq_id, text in db.items():
            tokens = text.split()[: config.max_tokens - 1]
            rows = hash_embed(tokens, config.dim, config.seed, _cache=cache)
            _validate_rows(seq_id, rows, config.max_tokens)
            out[seq_id] = EmbeddedSequence(seq_id, rows)
        return out

    file_dim, loaded = read_embedding_file(config.source)
    if config.dim is not None and config.dim != file_dim:
        raise DimensionMismatchError(
            f"{config.source}: file dim {file_dim} != configured dim {config.dim}"
        )
    missing = [seq_id for seq_id in db.ids() if seq_id not in loaded]
    if missing:
        raise EmbeddingCoverageError(missing)
    for seq_id in db.ids():
        rows = loaded[seq_id].rows
        _validate_rows(seq_id, rows, config.max_tokens)
        if config.normalize_rows:
            norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
            if np.any(norms == 0.0):
                raise ValidationError(f"seq_id {seq_id}: zero row cannot be normalized")
            rows = rows / norms[:, None]
        out[seq_id] = EmbeddedSequence(seq_id, rows)
    return out


def write_embedding_file(
    path: str,
    embeddings: Mapping[int, EmbeddedSequence],
    dim: int | None = None,
) -> None:
    """Write embeddings to ``path`` in ascending seq_id order."""
    require(len(embeddings) > 0, "refusing to write an empty embedding file", ValidationError)
    ids = sorted(embeddings)
    if dim is None:
        dim = embeddings[ids[0]].rows.shape[1]
    buf = bytearray(_MAGIC)
    buf += pack_u32(_VERSION)
    buf += pack_u32(dim)
    buf += pack_u64(len(ids))
    for seq_id in ids:
        rows = np.ascontiguousarray(embeddings[seq_id].rows, dtype=np.float32)
        if rows.ndim != 2 or rows.shape[1] != dim:
            raise ValidationError(f"seq_id {seq_id}: rows are not (n, {dim})")
        buf += pack_u64(seq_id)
        buf += pack_u32(rows.shape[0])
        buf += rows.tobytes()
    buf += pack_u32(crc32c(bytes(buf)))
    with open(path, "wb") as handle:
        handle.write(buf)


def read_embedding_file(path: str) -> tuple[int, dict[int, EmbeddedSequence]]:
    """Read an embedding file, returning (dim, embeddings by seq_id).

    Failure modes are distinct: bad magic, unsupported version, zero
    dimensionality, structural truncation (with byte offset), trailing
    garbage, and checksum mismatch.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) >= 4 and data[:4] != _MAGIC:
        raise MagicError(f"{path}: not an embedding file (bad magic)")
    cursor = Cursor(data, limit=max(len(data) - 4, 0))
    cursor.take(4, "magic")
    version = cursor.u32("version")
    if version != _VERSION:
        raise VersionError(f"{path}: unsupported version {version} (expected {_VERSION})")
    dim = cursor.u32("dim")
    if dim == 0:
        raise ValidationError(f"{path}: zero embedding dimensionality")
    seq_count = cursor.u64("sequence count")
    out: dict[int, EmbeddedSequence] = {}
    last_id = -1
    for pos in range(seq_count):
        seq_id = cursor.u64(f"sequence #{pos} seq_id")
        if seq_id <= last_id:
            raise FileFormatError(f"{path}: seq_ids not strictly ascending at #{pos}")
        last_id = seq_id
        row_count = cursor.u32(f"sequence #{pos} row count")
        if row_count == 0:
            raise ValidationError(f"{path}: sequence {seq_id} has zero rows")
        raw = cursor.take(row_count * dim * 4, f"sequence #{pos} rows")
        rows = np.frombuffer(raw, dtype="<f4").reshape(row_count, dim).copy()
        out[seq_id] = EmbeddedSequence(seq_id, rows)
    if cursor.remaining() != 0:
        raise FileFormatError(f"{path}: {cursor.remaining()} unexpected trailing bytes")
    stored = int.from_bytes(data[-4:], "little")
    computed = crc32c(data[:-4])
    if stored != computed:
        raise ChecksumError(f"{path}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")
    return dim, out
