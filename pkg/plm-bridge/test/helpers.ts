import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Fresh scratch directory for one test file. */
export function scratchDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix + "-"));
}

/** Run a detector-side Python snippet and parse its stdout as JSON. */
export function pythonJson(script: string): unknown {
  const out = execFileSync("python3", ["-c", script], { encoding: "utf-8" });
  return JSON.parse(out);
}

/** Run a detector-side Python snippet for its side effects. */
export function python(script: string): void {
  execFileSync("python3", ["-c", script], { encoding: "utf-8" });
}
