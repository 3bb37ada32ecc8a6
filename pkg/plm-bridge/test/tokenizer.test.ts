import { describe, expect, it } from "vitest";

import { CLS, ConfigError, SEP, encode, subwords } from "../src/index.js";

describe("subwords", () => {
  it("splits on whitespace and keeps short words whole", () => {
    expect(subwords("alpha beta  gamma")).toEqual(["alpha", "beta", "gamma"]);
  });

  it("chunks long words into continuation pieces", () => {
    expect(subwords("abcdefgh")).toEqual(["abcdef", "##gh"]);
    expect(subwords("instruction")).toEqual(["instru", "##ction"]);
  });

  it("returns nothing for blank text", () => {
    expect(subwords("   ")).toEqual([]);
  });
});

describe("encode", () => {
  it("puts CLS at position 0", () => {
    const encoding = encode("alpha beta", { maxTokens: 128, includeSpecialTokens: false });
    expect(encoding.pieces).toEqual([CLS, "alpha", "beta"]);
    expect(encoding.bodyCount).toBe(2);
    expect(encoding.truncated).toBe(false);
  });

  it("appends SEP when special tokens are included", () => {
    const encoding = encode("alpha", { maxTokens: 128, includeSpecialTokens: true });
    expect(encoding.pieces).toEqual([CLS, "alpha", SEP]);
  });

  it("truncates overflow to exactly maxTokens positions", () => {
    const text = Array.from({ length: 200 }, (_, i) => `w${i}`).join(" ");
    const encoding = encode(text, { maxTokens: 128, includeSpecialTokens: false });
    expect(encoding.pieces.length).toBe(128);
    expect(encoding.truncated).toBe(true);
    expect(encoding.bodyCount).toBe(200);
    expect(encoding.pieces[0]).toBe(CLS);
    expect(encoding.pieces[127]).toBe("w126");
  });

  it("preserves the trailing SEP under truncation", () => {
    const text = Array.from({ length: 200 }, (_, i) => `w${i}`).join(" ");
    const encoding = encode(text, { maxTokens: 128, includeSpecialTokens: true });
    expect(encoding.pieces.length).toBe(128);
    expect(encoding.pieces[0]).toBe(CLS);
    expect(encoding.pieces[127]).toBe(SEP);
    expect(encoding.pieces[126]).toBe("w125");
  });

  it("rejects a token budget below CLS plus one piece", () => {
    expect(() => encode("x", { maxTokens: 1, includeSpecialTokens: false })).toThrow(ConfigError);
  });

  it("is a pure function of the text", () => {
    const options = { maxTokens: 64, includeSpecialTokens: false };
    expect(encode("node a code 7", options)).toEqual(encode("node a code 7", options));
  });
});
