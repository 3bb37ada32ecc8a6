"""Deduplicated sequence storage and its on-disk container format.

A SequenceDB holds each distinct masked sequence once, keyed by a dense
seq_id assigned in first-seen order starting at 1. A lookup table (one
seq_id per input record) maps the full record stream back onto the
deduplicated store, so per-sequence results can be fanned out to every
record that produced them.

File layout (little-endian), checksummed with a trailing CRC32C over
every preceding byte:

    magic "RPDB" | version u32 | entry_count u64
    entries:  seq_id u64 | text_len u32 | UTF-8 text   (ascending seq_id)
    lookup_count u64 | seq_id u64 per record
    crc32c u32
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .binio import Cursor, crc32c, pack_u32, pack_u64
from .errors import (
    ChecksumError,
    ConfigError,
    FileFormatError,
    IntegrityError,
    MagicError,
    VersionError,
)
from .ingest import ProcessedSequence, RawLogRecord

__all__ = [
    "SequenceDB",
    "BlockView",
    "build_db",
    "build_block_views",
    "block_labels",
    "save_db",
    "load_db",
]

_MAGIC = b"RPDB"
_VERSION = 1


class SequenceDB:
    """Insertion-ordered store of unique sequence texts with dense ids."""

    def __init__(self) -> None:
        self._texts: list[str] = []
        self._ids: dict[str, int] = {}

    def add(self, text: str) -> int:
        """Return the id for ``text``, inserting it if unseen."""
        seq_id = self._ids.get(text)
        if seq_id is None:
            self._texts.append(text)
            seq_id = len(self._texts)
            self._ids[text] = seq_id
        return seq_id

    def get_id(self, text: str) -> int | None:
        return self._ids.get(text)

    def text(self, seq_id: int) -> str:
        if not 1 <= seq_id <= len(self._texts):
            raise IntegrityError(f"seq_id {seq_id} not in database (1..{len(self._texts)})")
        return self._texts[seq_id - 1]

    def ids(self) -> range:
        return range(1, len(self._texts) + 1)

    def items(self) -> Iterator[tuple[int, str]]:
        return enumerate(self._texts, start=1)

    def __contains__(self, text: str) -> bool:
        return text in self._ids

    def __len__(self) -> int:
        return len(self._texts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SequenceDB) and self._texts == other._texts

    def __repr__(self) -> str:
        return f"SequenceDB({len(self._texts)} unique sequences)"


def build_db(
    sequences: Iterable[ProcessedSequence | str],
) -> tuple[SequenceDB, list[int]]:
    """Deduplicate sequences into a SequenceDB plus a per-record lookup table.

    The lookup table records one seq_id for every input item, in input
    order, so ``len(lookup) == len(sequences)`` and repeated texts share
    an id.
    """
    db = SequenceDB()
    lookup = []
    for seq in sequences:
        text = seq if isinstance(seq, str) else seq.text
        lookup.append(db.add(text))
    return db, lookup


@dataclass(frozen=True)
class BlockView:
    """A group of records sharing a block id.

    ``canonical_text`` concatenates the distinct masked member sequences
    in first-appearance order, which is what gets embedded when whole
    blocks are the unit of detection.
    """

    block_id: str
    member_indices: tuple[int, ...]
    canonical_text: str


def build_block_views(
    records: Sequence[RawLogRecord],
    sequences: Sequence[ProcessedSequence],
) -> list[BlockView]:
    """Group records by block id, in first-appearance order of the ids."""
    if len(records) != len(sequences):
        raise IntegrityError("records and sequences are not aligned")
    member_indices: dict[str, list[int]] = {}
    member_texts: dict[str, list[str]] = {}
    order: list[str] = []
    for record, seq in zip(records, sequences):
        if record.block_id is None:
            raise ConfigError(f"record {record.index} has no block_id; required in block mode")
        if record.block_id not in member_indices:
            order.append(record.block_id)
            member_indices[record.block_id] = []
            member_texts[record.block_id] = []
        member_indices[record.block_id].append(record.index)
        if seq.text not in member_texts[record.block_id]:
            member_texts[record.block_id].append(seq.text)
    return [
        BlockView(bid, tuple(member_indices[bid]), " ".join(member_texts[bid]))
        for bid in order
    ]


def block_labels(
    records: Sequence[RawLogRecord],
    views: Sequence[BlockView],
) -> list[int | None]:
    """Per-block labels: 1 if any member record is labeled 1, else 0.

    Blocks whose members carry no labels at all yield None.
    """
    by_index: Mapping[int, RawLogRecord] = {r.index: r for r in records}
    labels: list[int | None] = []
    for view in views:
        member = [by_index[i].label for i in view.member_indices]
        known = [lab for lab in member if lab is not None]
        labels.append(max(known) if known else None)
    return labels


def save_db(db: SequenceDB, lookup: Sequence[int], path: str) -> None:
    """Write the database and lookup table to ``path``."""
    for seq_id in lookup:
        if not 1 <= seq_id <= len(db):
            raise IntegrityError(f"lookup references unknown seq_id {seq_id}")
    buf = bytearray(_MAGIC)
    buf += pack_u32(_VERSION)
    buf += pack_u64(len(db))
    for seq_id, text in db.items():
        encoded = text.encode("utf-8")
        buf += pack_u64(seq_id)
        buf += pack_u32(len(encoded))
        buf += encoded
    buf += pack_u64(len(lookup))
    for seq_id in lookup:
        buf += pack_u64(seq_id)
    buf += pack_u32(crc32c(bytes(buf)))
    with open(path, "wb") as handle:
        handle.write(buf)


def load_db(path: str) -> tuple[SequenceDB, list[int]]:
    """Read a database written by save_db.

    Problems are reported in validation order: wrong magic, unsupported
    version, structural truncation (with the failing byte offset),
    trailing garbage, and finally checksum mismatch for files that are
    structurally intact but corrupted in place.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) >= 4 and data[:4] != _MAGIC:
        raise MagicError(f"{path}: not a sequence database (bad magic)")
    cursor = Cursor(data, limit=max(len(data) - 4, 0))
    cursor.take(4, "magic")
    version = cursor.u32("version")
    if version != _VERSION:
        raise VersionError(f"{path}: unsupported version {version} (expected {_VERSION})")
    entry_count = cursor.u64("entry count")
    raw_entries = []
    for pos in range(entry_count):
        seq_id = cursor.u64(f"entry #{pos} seq_id")
        text_len = cursor.u32(f"entry #{pos} text length")
        raw_entries.append((seq_id, cursor.take(text_len, f"entry #{pos} text")))
    lookup_count = cursor.u64("lookup count")
    lookup = [cursor.u64(f"lookup #{pos}") for pos in range(lookup_count)]
    if cursor.remaining() != 0:
        raise FileFormatError(f"{path}: {cursor.remaining()} unexpected trailing bytes")
    stored = int.from_bytes(data[-4:], "little")
    computed = crc32c(data[:-4])
    if stored != computed:
        raise ChecksumError(f"{path}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")

    db = SequenceDB()
    for pos, (seq_id, raw) in enumerate(raw_entries, start=1):
        if seq_id != pos:
            raise FileFormatError(f"{path}: entry ids not dense (expected {pos}, found {seq_id})")
        try:
            text = raw.decode("utf-8")
        except ValueError as exc:
            raise FileFormatError(f"{path}: entry {seq_id} is not valid UTF-8: {exc}") from exc
        db.add(text)
    if len(db) != entry_count:
        raise FileFormatError(f"{path}: duplicate texts among {entry_count} entries")
    for seq_id in lookup:
        if not 1 <= seq_id <= entry_count:
            raise IntegrityError(f"{path}: lookup references unknown seq_id {seq_id}")
    return db, lookup
