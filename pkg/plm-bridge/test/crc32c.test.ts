import { describe, expect, it } from "vitest";

import { crc32c } from "../src/index.js";

const ascii = (text: string) => new TextEncoder().encode(text);

describe("crc32c", () => {
  it("matches the published CRC-32C check value", () => {
    expect(crc32c(ascii("123456789"))).toBe(0xe3069283);
  });

  it("returns zero for empty input", () => {
    expect(crc32c(new Uint8Array(0))).toBe(0x00000000);
  });

  it("matches the detector's implementation on frozen inputs", () => {
    expect(crc32c(ascii("service node a responded"))).toBe(0xdb86e579);
    expect(crc32c(Uint8Array.from({ length: 32 }, (_, i) => i))).toBe(0x46dd794e);
  });

  it("continues from a previous value like a single pass", () => {
    const whole = crc32c(ascii("123456789"));
    const split = crc32c(ascii("6789"), crc32c(ascii("12345")));
    expect(split).toBe(whole);
  });
});
