/**
 * CRC32C (Castagnoli), table-driven, matching the checksum the detector
 * appends to its binary containers. Kept dependency-free so the table
 * can be audited against the 0x82F63B78 polynomial directly.
 */

const POLY = 0x82f63b78;

function buildTable(): Uint32Array {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let crc = n;
    for (let i = 0; i < 8; i++) {
      crc = crc & 1 ? (crc >>> 1) ^ POLY : crc >>> 1;
    }
    table[n] = crc >>> 0;
  }
  return table;
}

const TABLE = buildTable();

/** CRC32C of `data`, optionally continuing from a previous value. */
export function crc32c(data: Uint8Array, crc = 0): number {
  crc = (crc ^ 0xffffffff) >>> 0;
  for (let i = 0; i < data.length; i++) {
    crc = (TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8)) >>> 0;
  }
  return (crc ^ 0xffffffff) >>> 0;
}
