/**
 * Export pipeline: persisted sequence store in, embedding file plus
 * provenance manifest out. The embedding file is byte-deterministic
 * for a fixed (model, layer, max_tokens, include-specials) tuple; the
 * manifest records that tuple along with the store's checksum.
 */

import { writeFileSync } from "node:fs";

import { loadModel } from "./encoder.js";
import { BridgeError, ConfigError } from "./errors.js";
import { hex, readSequenceDb } from "./rpdb.js";
import { EmbeddedMatrix, writeRpde } from "./rpde.js";
import { encode } from "./tokenizer.js";

export interface BridgeConfig {
  model: string;
  maxTokens: number;
  batchSize: number;
  /** Hidden layer to export; null selects the final layer. */
  layer: number | null;
  includeSpecialTokens: boolean;
  out: string;
  /** Manifest path; defaults to out + ".manifest.json". */
  manifest?: string;
}

export const DEFAULTS = {
  model: "builtin/mini-256",
  maxTokens: 128,
  batchSize: 32,
  layer: null as number | null,
  includeSpecialTokens: false,
};

export interface ExportSummary {
  sequences: number;
  dim: number;
  layer: number;
  totalRows: number;
  truncated: number;
  crc: string;
  out: string;
  manifest: string;
}

/**
 * Embed every sequence in the store at `dbFile` and write the result
 * to `config.out`. Truncation is reported through `warn` with counts;
 * the returned summary carries the written file's CRC.
 */
export function exportEmbeddings(
  dbFile: string,
  config: BridgeConfig,
  warn: (message: string) => void = () => {},
): ExportSummary {
  const db = readSequenceDb(dbFile);
  const encoder = loadModel(config.model);
  if (config.maxTokens < 2 || config.maxTokens > encoder.spec.maxPositions) {
    throw new ConfigError(
      `max_tokens must be in [2, ${encoder.spec.maxPositions}] for ${config.model}, ` +
        `got ${config.maxTokens}`,
    );
  }
  if (!Number.isInteger(config.batchSize) || config.batchSize < 1) {
    throw new ConfigError(`batch size must be a positive integer, got ${config.batchSize}`);
  }
  const layer = config.layer ?? encoder.spec.layerCount;

  const matrices: EmbeddedMatrix[] = [];
  let truncated = 0;
  let totalRows = 0;
  for (let start = 0; start < db.entries.length; start += config.batchSize) {
    const batch = db.entries.slice(start, start + config.batchSize);
    try {
      for (const entry of batch) {
        const encoding = encode(entry.text, {
          maxTokens: config.maxTokens,
          includeSpecialTokens: config.includeSpecialTokens,
        });
        if (encoding.truncated) truncated += 1;
        const rows = encoder.encodeSequence(encoding.pieces, layer);
        totalRows += encoding.pieces.length;
        matrices.push({ seqId: entry.seqId, rowCount: encoding.pieces.length, rows });
      }
    } catch (exc) {
      if (exc instanceof RangeError) {
        throw new BridgeError(
          `out of memory embedding a batch of ${batch.length} sequences; ` +
            `retry with a smaller --batch-size`,
        );
      }
      throw exc;
    }
  }
  if (truncated > 0) {
    warn(
      `${truncated} of ${db.entries.length} sequences exceeded ` +
        `max_tokens=${config.maxTokens} and were truncated`,
    );
  }

  const data = writeRpde(config.out, matrices, encoder.spec.dim);
  const crcView = new DataView(data.buffer, data.byteOffset + data.length - 4, 4);
  const crc = hex(crcView.getUint32(0, true));

  const manifestPath = config.manifest ?? config.out + ".manifest.json";
  const manifest = {
    model: config.model,
    layer,
    max_tokens: config.maxTokens,
    created_at: new Date().toISOString(),
    db_checksum: hex(db.checksum),
  };
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");

  return {
    sequences: db.entries.length,
    dim: encoder.spec.dim,
    layer,
    totalRows,
    truncated,
    crc,
    out: config.out,
    manifest: manifestPath,
  };
}
