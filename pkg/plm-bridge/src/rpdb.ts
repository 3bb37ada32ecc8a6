/**
 * Reader for the detector's persisted sequence store.
 *
 * File layout (little-endian), checksummed with a trailing CRC32C over
 * every preceding byte:
 *
 *     magic "RPDB" | version u32 | entry_count u64
 *     entries:  seq_id u64 | text_len u32 | UTF-8 text   (dense ids from 1)
 *     lookup_count u64 | seq_id u64 per record
 *     crc32c u32
 */

import { readFileSync } from "node:fs";

import { Cursor } from "./binio.js";
import { crc32c } from "./crc32c.js";
import { ChecksumError, FormatError, MagicError, VersionError } from "./errors.js";

const MAGIC = new TextEncoder().encode("RPDB");
const VERSION = 1;

export interface SequenceEntry {
  seqId: number;
  text: string;
}

export interface SequenceDb {
  entries: SequenceEntry[];
  /** One seq_id per original input record. */
  lookup: number[];
  /** The file's own trailing CRC32C, for provenance manifests. */
  checksum: number;
}

/** Parse an RPDB buffer, enforcing the same checks the detector applies. */
export function parseSequenceDb(data: Uint8Array, source = "<buffer>"): SequenceDb {
  if (data.length >= 4 && !MAGIC.every((b, i) => data[i] === b)) {
    throw new MagicError(`${source}: not a sequence database (bad magic)`);
  }
  const cursor = new Cursor(data, Math.max(data.length - 4, 0));
  cursor.take(4, "magic");
  const version = cursor.u32("version");
  if (version !== VERSION) {
    throw new VersionError(`${source}: unsupported version ${version} (expected ${VERSION})`);
  }
  const entryCount = cursor.u64("entry count");
  const rawEntries: Array<[number, Uint8Array]> = [];
  for (let pos = 0; pos < entryCount; pos++) {
    const seqId = cursor.u64(`entry #${pos} seq_id`);
    const textLen = cursor.u32(`entry #${pos} text length`);
    rawEntries.push([seqId, cursor.take(textLen, `entry #${pos} text`)]);
  }
  const lookupCount = cursor.u64("lookup count");
  const lookup: number[] = [];
  for (let pos = 0; pos < lookupCount; pos++) {
    lookup.push(cursor.u64(`lookup #${pos}`));
  }
  if (cursor.remaining() !== 0) {
    throw new FormatError(`${source}: ${cursor.remaining()} unexpected trailing bytes`);
  }
  const trailer = new DataView(data.buffer, data.byteOffset + data.length - 4, 4);
  const stored = trailer.getUint32(0, true);
  const computed = crc32c(data.subarray(0, data.length - 4));
  if (stored !== computed) {
    throw new ChecksumError(`${source}: checksum mismatch (stored ${hex(stored)}, computed ${hex(computed)})`);
  }

  const decoder = new TextDecoder("utf-8", { fatal: true });
  const entries: SequenceEntry[] = [];
  const seen = new Set<string>();
  rawEntries.forEach(([seqId, raw], index) => {
    if (seqId !== index + 1) {
      throw new FormatError(`${source}: entry ids not dense (expected ${index + 1}, found ${seqId})`);
    }
    let text: string;
    try {
      text = decoder.decode(raw);
    } catch (exc) {
      throw new FormatError(`${source}: entry ${seqId} is not valid UTF-8: ${exc}`);
    }
    if (seen.has(text)) {
      throw new FormatError(`${source}: duplicate texts among ${entryCount} entries`);
    }
    seen.add(text);
    entries.push({ seqId, text });
  });
  for (const seqId of lookup) {
    if (seqId < 1 || seqId > entryCount) {
      throw new FormatError(`${source}: lookup references unknown seq_id ${seqId}`);
    }
  }
  return { entries, lookup, checksum: stored };
}

export function readSequenceDb(path: string): SequenceDb {
  return parseSequenceDb(new Uint8Array(readFileSync(path)), path);
}

export function hex(value: number): string {
  return "0x" + value.toString(16).padStart(8, "0");
}
