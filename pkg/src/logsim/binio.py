"""Little-endian binary primitives shared by the on-disk formats.

Both container formats used here (sequence databases and embedding
files) end with a CRC32C (Castagnoli) of every preceding byte. The
checksum is implemented locally so that writers in other languages can
reproduce it from the same 256-entry table.
"""

from __future__ import annotations

import struct

from .errors import TruncatedFileError

_CRC32C_POLY = 0x82F63B78


def _build_table() -> list[int]:
    table = []
    for n in range(256):
        crc = n
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC32C_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC32C_TABLE = _build_table()


def crc32c(data: bytes, crc: int = 0) -> int:
    """CRC32C of ``data``, optionally continuing from a previous value."""
    crc ^= 0xFFFFFFFF
    table = _CRC32C_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def pack_u32(value: int) -> bytes:
    return _U32.pack(value)


def pack_u64(value: int) -> bytes:
    return _U64.pack(value)


class Cursor:
    """Bounds-checked sequential reader over an in-memory buffer.

    Every read that would run past ``limit`` raises TruncatedFileError
    carrying the offset at which the data ran out.
    """

    def __init__(self, data: bytes, limit: int | None = None):
        self.data = data
        self.offset = 0
        self.limit = len(data) if limit is None else limit

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > self.limit:
            raise TruncatedFileError(f"unexpected end of file reading {what}", self.offset)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]

    def remaining(self) -> int:
        return self.limit - self.offset
