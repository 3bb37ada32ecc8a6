import { spawnSync } from "node:child_process";
import { existsSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import {
  ConfigError,
  ModelError,
  encode,
  exportEmbeddings,
  parseRpde,
  readSequenceDb,
} from "../src/index.js";
import { python, pythonJson, scratchDir } from "./helpers.js";

const TEXTS = Array.from(
  { length: 10 },
  (_, i) => `service node ${String.fromCharCode(97 + i)} responded with status NUM in window`,
);

let dir: string;
let dbPath: string;

beforeAll(() => {
  dir = scratchDir("bridge");
  dbPath = join(dir, "store.rpdb");
  python(`
from logsim import build_db, save_db
db, lookup = build_db(${JSON.stringify(TEXTS)})
save_db(db, lookup, ${JSON.stringify(dbPath)})
`);
});

function config(out: string, overrides: Record<string, unknown> = {}) {
  return {
    model: "builtin/mini-64",
    maxTokens: 128,
    batchSize: 32,
    layer: null as number | null,
    includeSpecialTokens: false,
    out,
    ...overrides,
  };
}

describe("exportEmbeddings", () => {
  it("exports a 10-sequence store the detector parses with matching dims and counts", () => {
    const out = join(dir, "store.rpde");
    const summary = exportEmbeddings(dbPath, config(out));
    expect(summary.sequences).toBe(10);
    expect(summary.dim).toBe(64);

    const report = pythonJson(`
import json
from logsim import read_embedding_file
dim, mats = read_embedding_file(${JSON.stringify(out)})
print(json.dumps({
    "dim": dim,
    "count": len(mats),
    "row_counts": {str(k): int(v.rows.shape[0]) for k, v in mats.items()},
    "dtype": str(next(iter(mats.values())).rows.dtype),
}))
`) as { dim: number; count: number; row_counts: Record<string, number>; dtype: string };
    expect(report.dim).toBe(summary.dim);
    expect(report.count).toBe(summary.sequences);
    expect(report.dtype).toBe("float32");

    const local = parseRpde(new Uint8Array(readFileSync(out)));
    for (const matrix of local.matrices) {
      expect(report.row_counts[String(matrix.seqId)]).toBe(matrix.rowCount);
    }
  });

  it("produces identical CRCs for two exports with a fixed model", () => {
    const first = exportEmbeddings(dbPath, config(join(dir, "a.rpde")));
    const second = exportEmbeddings(dbPath, config(join(dir, "b.rpde")));
    expect(first.crc).toBe(second.crc);
    const a = readFileSync(join(dir, "a.rpde"));
    const b = readFileSync(join(dir, "b.rpde"));
    expect(a.equals(b)).toBe(true);
  });

  it("keeps the total row count in step with the tokenizer", () => {
    const summary = exportEmbeddings(dbPath, config(join(dir, "counts.rpde")));
    let expected = 0;
    for (const entry of readSequenceDb(dbPath).entries) {
      expected += encode(entry.text, { maxTokens: 128, includeSpecialTokens: false }).pieces.length;
    }
    expect(summary.totalRows).toBe(expected);
  });

  it("truncates oversize sequences to max_tokens rows and warns with counts", () => {
    const longDb = join(dir, "long.rpdb");
    python(`
from logsim import build_db, save_db
texts = ["short event", " ".join(f"w{i}" for i in range(200))]
db, lookup = build_db(texts)
save_db(db, lookup, ${JSON.stringify(longDb)})
`);
    const warnings: string[] = [];
    const out = join(dir, "long.rpde");
    const summary = exportEmbeddings(longDb, config(out), (message) => warnings.push(message));
    expect(summary.truncated).toBe(1);
    expect(warnings).toEqual(["1 of 2 sequences exceeded max_tokens=128 and were truncated"]);
    const parsed = parseRpde(new Uint8Array(readFileSync(out)));
    expect(parsed.matrices[1].rowCount).toBe(128);
  });

  it("writes the provenance manifest next to the embedding file", () => {
    const out = join(dir, "manifested.rpde");
    const summary = exportEmbeddings(dbPath, config(out, { layer: 1 }));
    const manifest = JSON.parse(readFileSync(summary.manifest, "utf-8"));
    expect(Object.keys(manifest).sort()).toEqual([
      "created_at",
      "db_checksum",
      "layer",
      "max_tokens",
      "model",
    ]);
    expect(manifest.model).toBe("builtin/mini-64");
    expect(manifest.layer).toBe(1);
    expect(manifest.max_tokens).toBe(128);
    expect(manifest.db_checksum).toBe("0x" + readSequenceDb(dbPath).checksum.toString(16).padStart(8, "0"));
    expect(Number.isNaN(Date.parse(manifest.created_at))).toBe(false);
  });

  it("rejects max_tokens outside the model limit", () => {
    expect(() => exportEmbeddings(dbPath, config(join(dir, "x.rpde"), { maxTokens: 4096 }))).toThrow(
      ConfigError,
    );
    expect(() => exportEmbeddings(dbPath, config(join(dir, "x.rpde"), { maxTokens: 1 }))).toThrow(
      ConfigError,
    );
  });

  it("rejects unloadable models before touching the output", () => {
    const out = join(dir, "never.rpde");
    expect(() => exportEmbeddings(dbPath, config(out, { model: "hub/some-encoder" }))).toThrow(
      ModelError,
    );
    expect(existsSync(out)).toBe(false);
  });
});

describe("detector integration", () => {
  it("feeds detect end to end: known sequences score as matches", () => {
    const maskedDb = join(dir, "masked.rpdb");
    const lines = join(dir, "known.txt");
    python(`
lines = [f"service node {chr(97 + i)} responded with status {i} in window" for i in range(10)]
open(${JSON.stringify(lines)}, "w").write("\\n".join(lines) + "\\n")
import subprocess, sys
subprocess.run([sys.executable, "-m", "logsim.cli", "build-db",
                "--input", ${JSON.stringify(lines)}, "--format", "plain",
                "--out", ${JSON.stringify(maskedDb)}],
               check=True, capture_output=True)
`);
    const out = join(dir, "masked.rpde");
    exportEmbeddings(maskedDb, config(out));

    const report = pythonJson(`
import json, subprocess, sys
results = ${JSON.stringify(join(dir, "results.jsonl"))}
subprocess.run([sys.executable, "-m", "logsim.cli", "detect",
                "--db", ${JSON.stringify(maskedDb)},
                "--embeddings", ${JSON.stringify(out)},
                "--query-embeddings", ${JSON.stringify(out)},
                "--test", ${JSON.stringify(join(dir, "known.txt"))}, "--format", "plain",
                "--aggregation", "mean",
                "--threshold-policy", "fixed", "--threshold-value", "0.1",
                "--out", results],
               check=True, capture_output=True)
rows = [json.loads(l) for l in open(results)]
print(json.dumps({
    "rows": len(rows),
    "flagged": sum(r["pred"] for r in rows),
    "max_abs_score": max(abs(r["score"]) for r in rows),
}))
`) as { rows: number; flagged: number; max_abs_score: number };
    expect(report.rows).toBe(10);
    expect(report.flagged).toBe(0);
    expect(report.max_abs_score).toBeLessThan(1e-6);
  });
});

describe("cli", () => {
  const cliPath = fileURLToPath(new URL("../dist/cli.js", import.meta.url));

  function run(...args: string[]) {
    return spawnSync("node", [cliPath, ...args], { encoding: "utf-8" });
  }

  it("exports end to end and prints a summary", () => {
    const out = join(dir, "cli.rpde");
    const result = run("export", "--db", dbPath, "--out", out, "--model", "builtin/mini-32");
    expect(result.status).toBe(0);
    const summary = JSON.parse(result.stdout);
    expect(summary.sequences).toBe(10);
    expect(summary.dim).toBe(32);
    expect(existsSync(out)).toBe(true);
    expect(existsSync(out + ".manifest.json")).toBe(true);
  });

  it("exits 1 on usage errors", () => {
    expect(run().status).toBe(1);
    expect(run("export").status).toBe(1);
    expect(run("export", "--db", dbPath, "--out", join(dir, "y.rpde"), "--bogus").status).toBe(1);
    expect(
      run("export", "--db", dbPath, "--out", join(dir, "y.rpde"), "--max-tokens", "one").status,
    ).toBe(1);
    expect(
      run("export", "--db", dbPath, "--out", join(dir, "y.rpde"), "--model", "hub/enc").status,
    ).toBe(1);
  });

  it("exits 2 on missing or corrupt stores", () => {
    expect(run("export", "--db", join(dir, "absent.rpdb"), "--out", join(dir, "z.rpde")).status).toBe(2);
    const corrupt = join(dir, "corrupt.rpdb");
    const bytes = new Uint8Array(readFileSync(dbPath));
    bytes[bytes.length - 10] ^= 0xff;
    writeFileSync(corrupt, bytes);
    expect(run("export", "--db", corrupt, "--out", join(dir, "z.rpde")).status).toBe(2);
  });

  it("prints a version", () => {
    const result = run("--version");
    expect(result.status).toBe(0);
    expect(result.stdout).toContain("plm-bridge");
  });
});
