/**
 * Little-endian primitives for the two container formats. Mirrors the
 * detector's reader semantics: every read is bounds-checked and a read
 * past the end reports the offset at which the data ran out.
 */

import { FormatError, TruncatedFileError } from "./errors.js";

/** Bounds-checked sequential reader over an in-memory buffer. */
export class Cursor {
  readonly data: Uint8Array;
  private readonly view: DataView;
  offset = 0;
  readonly limit: number;

  constructor(data: Uint8Array, limit?: number) {
    this.data = data;
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
    this.limit = limit ?? data.length;
  }

  take(count: number, what: string): Uint8Array {
    const end = this.offset + count;
    if (end > this.limit) {
      throw new TruncatedFileError(`unexpected end of file reading ${what}`, this.offset);
    }
    const chunk = this.data.subarray(this.offset, end);
    this.offset = end;
    return chunk;
  }

  u32(what: string): number {
    this.take(4, what);
    return this.view.getUint32(this.offset - 4, true);
  }

  /**
   * u64 field narrowed to a JS number. The formats use u64 for counts
   * and ids; anything beyond 2^53 is corrupt long before it is real.
   */
  u64(what: string): number {
    this.take(8, what);
    const value = this.view.getBigUint64(this.offset - 8, true);
    if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new FormatError(`${what} ${value} does not fit a safe integer`);
    }
    return Number(value);
  }

  remaining(): number {
    return this.limit - this.offset;
  }
}

/** Growable little-endian byte writer. */
export class Writer {
  private chunks: Uint8Array[] = [];
  private scratch = new DataView(new ArrayBuffer(8));

  bytes(data: Uint8Array): void {
    this.chunks.push(data);
  }

  u32(value: number): void {
    this.scratch.setUint32(0, value >>> 0, true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 4)));
  }

  u64(value: number): void {
    this.scratch.setBigUint64(0, BigInt(value), true);
    this.chunks.push(new Uint8Array(this.scratch.buffer.slice(0, 8)));
  }

  f32Array(values: Float32Array): void {
    const out = new Uint8Array(values.length * 4);
    const view = new DataView(out.buffer);
    for (let i = 0; i < values.length; i++) {
      view.setFloat32(i * 4, values[i], true);
    }
    this.chunks.push(out);
  }

  concat(): Uint8Array {
    let total = 0;
    for (const chunk of this.chunks) total += chunk.length;
    const out = new Uint8Array(total);
    let at = 0;
    for (const chunk of this.chunks) {
      out.set(chunk, at);
      at += chunk.length;
    }
    return out;
  }
}
