/**
 * Writer (and verifying reader) for the embedding container the
 * detector consumes with --provider file.
 *
 * File layout (little-endian), checksummed with a trailing CRC32C over
 * every preceding byte:
 *
 *     magic "RPDE" | version u32 | dim u32 | seq_count u64
 *     per sequence (ascending seq_id):
 *         seq_id u64 | row_count u32 | row_count * dim float32, row-major
 *     crc32c u32
 *
 * Row 0 of every matrix is the CLS row; rows 1..n are token rows.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { Cursor, Writer } from "./binio.js";
import { crc32c } from "./crc32c.js";
import { ChecksumError, FormatError, MagicError, VersionError } from "./errors.js";

const MAGIC = new TextEncoder().encode("RPDE");
const VERSION = 1;

export interface EmbeddedMatrix {
  seqId: number;
  /** row-major, rowCount x dim */
  rows: Float32Array;
  rowCount: number;
}

/** Serialize matrices into an RPDE buffer. Ids must be ascending. */
export function encodeRpde(matrices: EmbeddedMatrix[], dim: number): Uint8Array {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new FormatError(`dim must be a positive integer, got ${dim}`);
  }
  if (matrices.length === 0) {
    throw new FormatError("refusing to write an empty embedding file");
  }
  const writer = new Writer();
  writer.bytes(MAGIC);
  writer.u32(VERSION);
  writer.u32(dim);
  writer.u64(matrices.length);
  let previous = 0;
  for (const matrix of matrices) {
    if (matrix.seqId <= previous) {
      throw new FormatError(`seq_ids must be ascending, ${matrix.seqId} after ${previous}`);
    }
    previous = matrix.seqId;
    if (matrix.rows.length !== matrix.rowCount * dim) {
      throw new FormatError(
        `sequence ${matrix.seqId}: ${matrix.rows.length} floats for ${matrix.rowCount} rows of dim ${dim}`,
      );
    }
    if (matrix.rowCount < 1) {
      throw new FormatError(`sequence ${matrix.seqId}: needs at least the CLS row`);
    }
    writer.u64(matrix.seqId);
    writer.u32(matrix.rowCount);
    writer.f32Array(matrix.rows);
  }
  const body = writer.concat();
  const out = new Uint8Array(body.length + 4);
  out.set(body, 0);
  new DataView(out.buffer).setUint32(body.length, crc32c(body), true);
  return out;
}

export function writeRpde(path: string, matrices: EmbeddedMatrix[], dim: number): Uint8Array {
  const data = encodeRpde(matrices, dim);
  writeFileSync(path, data);
  return data;
}

export interface RpdeFile {
  dim: number;
  matrices: EmbeddedMatrix[];
  checksum: number;
}

/** Parse an RPDE buffer with the detector's validation order. */
export function parseRpde(data: Uint8Array, source = "<buffer>"): RpdeFile {
  if (data.length >= 4 && !MAGIC.every((b, i) => data[i] === b)) {
    throw new MagicError(`${source}: not an embedding file (bad magic)`);
  }
  const cursor = new Cursor(data, Math.max(data.length - 4, 0));
  cursor.take(4, "magic");
  const version = cursor.u32("version");
  if (version !== VERSION) {
    throw new VersionError(`${source}: unsupported version ${version} (expected ${VERSION})`);
  }
  const dim = cursor.u32("dim");
  const seqCount = cursor.u64("sequence count");
  const matrices: EmbeddedMatrix[] = [];
  let previous = 0;
  for (let pos = 0; pos < seqCount; pos++) {
    const seqId = cursor.u64(`sequence #${pos} seq_id`);
    if (seqId <= previous) {
      throw new FormatError(`${source}: seq_ids must be ascending, ${seqId} after ${previous}`);
    }
    previous = seqId;
    const rowCount = cursor.u32(`sequence #${pos} row count`);
    const raw = cursor.take(rowCount * dim * 4, `sequence #${pos} rows`);
    const rows = new Float32Array(rowCount * dim);
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    for (let i = 0; i < rows.length; i++) {
      rows[i] = view.getFloat32(i * 4, true);
    }
    matrices.push({ seqId, rowCount, rows });
  }
  if (cursor.remaining() !== 0) {
    throw new FormatError(`${source}: ${cursor.remaining()} unexpected trailing bytes`);
  }
  const trailer = new DataView(data.buffer, data.byteOffset + data.length - 4, 4);
  const stored = trailer.getUint32(0, true);
  const computed = crc32c(data.subarray(0, data.length - 4));
  if (stored !== computed) {
    throw new ChecksumError(`${source}: checksum mismatch`);
  }
  return { dim, matrices, checksum: stored };
}

export function readRpde(path: string): RpdeFile {
  return parseRpde(new Uint8Array(readFileSync(path)), path);
}
