import { describe, expect, it } from "vitest";

import { CLS, ModelError, loadModel } from "../src/index.js";

const PIECES = [CLS, "service", "node", "a", "respon", "##ded"];

describe("loadModel", () => {
  it("resolves the builtin family with the dim from the id", () => {
    const encoder = loadModel("builtin/mini-64");
    expect(encoder.spec.dim).toBe(64);
    expect(encoder.spec.layerCount).toBe(2);
    expect(encoder.spec.maxPositions).toBe(512);
  });

  it("rejects hub model ids with an offline explanation", () => {
    expect(() => loadModel("bert-base-uncased")).toThrow(ModelError);
    expect(() => loadModel("bert-base-uncased")).toThrow(/offline/);
  });

  it("rejects out-of-range builtin dims", () => {
    expect(() => loadModel("builtin/mini-4")).toThrow(ModelError);
    expect(() => loadModel("builtin/mini-8192")).toThrow(ModelError);
  });
});

describe("ReferenceEncoder", () => {
  it("produces identical bytes for identical inputs", () => {
    const encoder = loadModel("builtin/mini-32");
    const a = encoder.encodeSequence(PIECES, 2);
    const b = encoder.encodeSequence(PIECES, 2);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("emits unit-norm fp32 rows", () => {
    const encoder = loadModel("builtin/mini-48");
    const rows = encoder.encodeSequence(PIECES, 2);
    for (let i = 0; i < PIECES.length; i++) {
      let sumSquares = 0;
      for (let j = 0; j < 48; j++) {
        const v = rows[i * 48 + j];
        expect(Math.fround(v)).toBe(v);
        sumSquares += v * v;
      }
      expect(Math.abs(Math.sqrt(sumSquares) - 1)).toBeLessThan(1e-6);
    }
  });

  it("is deterministic across independently loaded instances", () => {
    const a = loadModel("builtin/mini-32").encodeSequence(PIECES, 2);
    const b = loadModel("builtin/mini-32").encodeSequence([...PIECES], 2);
    expect(Buffer.from(a.buffer).equals(Buffer.from(b.buffer))).toBe(true);
  });

  it("derives different vectors for different pieces", () => {
    const encoder = loadModel("builtin/mini-32");
    const rows = encoder.encodeSequence([CLS, "alpha", "beta"], 0);
    let differ = false;
    for (let j = 0; j < 32; j++) {
      if (rows[1 * 32 + j] !== rows[2 * 32 + j]) differ = true;
    }
    expect(differ).toBe(true);
  });

  it("distinguishes the embedding layer from the final layer", () => {
    const encoder = loadModel("builtin/mini-32");
    const shallow = encoder.encodeSequence(PIECES, 0);
    const deep = encoder.encodeSequence(PIECES, 2);
    expect(Buffer.from(shallow.buffer).equals(Buffer.from(deep.buffer))).toBe(false);
  });

  it("summarizes the body into row 0 after mixing", () => {
    const encoder = loadModel("builtin/mini-32");
    const a = encoder.encodeSequence([CLS, "alpha", "beta"], 2);
    const b = encoder.encodeSequence([CLS, "alpha", "gamma"], 2);
    const rowsDiffer = (from: Float32Array, to: Float32Array, row: number) => {
      for (let j = 0; j < 32; j++) {
        if (from[row * 32 + j] !== to[row * 32 + j]) return true;
      }
      return false;
    };
    expect(rowsDiffer(a, b, 0)).toBe(true);
  });

  it("rejects layers outside the model depth and empty input", () => {
    const encoder = loadModel("builtin/mini-32");
    expect(() => encoder.encodeSequence(PIECES, 3)).toThrow(ModelError);
    expect(() => encoder.encodeSequence(PIECES, -1)).toThrow(ModelError);
    expect(() => encoder.encodeSequence([], 2)).toThrow(ModelError);
  });

  it("encodes position: the same piece twice yields different rows", () => {
    const encoder = loadModel("builtin/mini-32");
    const rows = encoder.encodeSequence([CLS, "ping", "ping"], 0);
    let differ = false;
    for (let j = 0; j < 32; j++) {
      if (rows[1 * 32 + j] !== rows[2 * 32 + j]) differ = true;
    }
    expect(differ).toBe(true);
  });
});
