/**
 * Deterministic reference encoder with transformer-shaped outputs.
 *
 * Real deployments embed with a pretrained sentence encoder; this
 * module is the offline stand-in that keeps the export pipeline, the
 * file format and the manifest contract exercisable without model
 * weights or network access. Outputs mimic the shape a transformer
 * produces: a per-piece embedding plus sinusoidal positions, then a
 * fixed number of contextual mixing layers, unit-normalized fp32 rows.
 * Hidden state 0 aggregates the whole sequence and becomes the CLS row.
 *
 * Everything derives from the model id via counter-based hashing, so a
 * given (model, layer, text) triple yields identical bytes on every
 * run and host.
 */

import { ModelError } from "./errors.js";

const MASK = 0xffffffffffffffffn;
const LAYER_COUNT = 2;
const MAX_POSITIONS = 512;

export interface ModelSpec {
  id: string;
  dim: number;
  maxPositions: number;
  layerCount: number;
}

function fnv1a64(text: string, seed: bigint): bigint {
  let hash = (0xcbf29ce484222325n ^ seed) & MASK;
  const bytes = new TextEncoder().encode(text);
  for (const byte of bytes) {
    hash ^= BigInt(byte);
    hash = (hash * 0x100000001b3n) & MASK;
  }
  return hash;
}

function splitmix64(state: bigint): bigint {
  let z = (state + 0x9e3779b97f4a7c15n) & MASK;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
  return (z ^ (z >> 31n)) & MASK;
}

/** Uniform float in [-1, 1) from the top 32 bits of a mixed state. */
function unitFloat(state: bigint): number {
  const top = Number((splitmix64(state) >> 32n) & 0xffffffffn);
  return top / 2147483648 - 1;
}

function normalize(row: Float32Array): void {
  let sumSquares = 0;
  for (let j = 0; j < row.length; j++) sumSquares += row[j] * row[j];
  const norm = Math.sqrt(sumSquares);
  if (norm === 0) return;
  for (let j = 0; j < row.length; j++) row[j] = Math.fround(row[j] / norm);
}

export class ReferenceEncoder {
  readonly spec: ModelSpec;
  private readonly seed: bigint;
  private readonly gates: Float32Array[];

  constructor(spec: ModelSpec) {
    this.spec = spec;
    this.seed = fnv1a64(spec.id, 0n);
    this.gates = [];
    for (let layer = 0; layer < spec.layerCount; layer++) {
      const gate = new Float32Array(spec.dim);
      const base = splitmix64(this.seed + BigInt(1000 + layer));
      for (let j = 0; j < spec.dim; j++) {
        gate[j] = Math.fround(unitFloat(base + BigInt(j)));
      }
      this.gates.push(gate);
    }
  }

  private pieceEmbedding(piece: string, position: number): Float32Array {
    const dim = this.spec.dim;
    const row = new Float32Array(dim);
    const base = fnv1a64(piece, this.seed);
    for (let j = 0; j < dim; j++) {
      row[j] = unitFloat(base + BigInt(j));
    }
    for (let j = 0; j < dim; j += 2) {
      const angle = position / Math.pow(10000, j / dim);
      row[j] += 0.1 * Math.sin(angle);
      if (j + 1 < dim) row[j + 1] += 0.1 * Math.cos(angle);
    }
    normalize(row);
    return row;
  }

  /**
   * Hidden states for an encoding at the requested layer: 0 is the
   * position-encoded embeddings, layerCount is the final states.
   * Returns a row-major (pieces.length x dim) matrix; row 0 is the
   * sequence summary regardless of layer.
   */
  encodeSequence(pieces: string[], layer: number): Float32Array {
    if (!Number.isInteger(layer) || layer < 0 || layer > this.spec.layerCount) {
      throw new ModelError(`layer must be in [0, ${this.spec.layerCount}], got ${layer}`);
    }
    if (pieces.length < 1) {
      throw new ModelError("cannot encode an empty sequence");
    }
    const dim = this.spec.dim;
    let rows = pieces.map((piece, i) => this.pieceEmbedding(piece, i));
    for (let current = 1; current <= layer; current++) {
      const gate = this.gates[current - 1];
      const next: Float32Array[] = [new Float32Array(dim)];
      for (let i = 1; i < rows.length; i++) {
        const here = rows[i];
        const left = rows[i - 1];
        const right = i + 1 < rows.length ? rows[i + 1] : here;
        const mixed = new Float32Array(dim);
        for (let j = 0; j < dim; j++) {
          mixed[j] =
            0.7 * here[j] +
            0.15 * (left[j] + right[j]) +
            0.2 * Math.tanh(gate[j] * here[j]);
        }
        normalize(mixed);
        next[i] = mixed;
      }
      const summary = next[0];
      const bodyRows = rows.length > 1 ? rows.length - 1 : 1;
      for (let i = 1; i < rows.length; i++) {
        for (let j = 0; j < dim; j++) summary[j] += next[i][j];
      }
      for (let j = 0; j < dim; j++) {
        summary[j] = summary[j] / bodyRows + 0.5 * rows[0][j];
      }
      normalize(summary);
      rows = next;
    }
    const out = new Float32Array(rows.length * dim);
    rows.forEach((row, i) => out.set(row, i * dim));
    return out;
  }
}

const BUILTIN = /^builtin\/mini-(\d+)$/;

/**
 * Resolve a model identifier. Only the self-contained builtin family
 * loads here; hub-hosted encoders need network and weights, so point
 * any other id at an environment that has them and feed the resulting
 * file to the detector directly.
 */
export function loadModel(id: string): ReferenceEncoder {
  const match = BUILTIN.exec(id);
  if (!match) {
    throw new ModelError(
      `model "${id}" is not loadable here: this build is offline and only ` +
        `ships the deterministic builtin family (builtin/mini-<dim>, e.g. ` +
        `builtin/mini-256). Export with a hub-hosted encoder where its ` +
        `weights are available and hand the file to the detector directly.`,
    );
  }
  const dim = Number(match[1]);
  if (dim < 8 || dim > 4096) {
    throw new ModelError(`builtin model dim must be in [8, 4096], got ${dim}`);
  }
  return new ReferenceEncoder({
    id,
    dim,
    maxPositions: MAX_POSITIONS,
    layerCount: LAYER_COUNT,
  });
}
