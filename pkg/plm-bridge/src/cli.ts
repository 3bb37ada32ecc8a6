#!/usr/bin/env node
/**
 * plm-bridge export: embed a persisted sequence store into the
 * embedding file the detector reads with --provider file.
 *
 * Exit codes match the detector's convention: 1 for usage and
 * configuration problems, 2 for missing or corrupt data files.
 */

import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { DEFAULTS, exportEmbeddings } from "./bridge.js";
import {
  BridgeError,
  ChecksumError,
  ConfigError,
  FormatError,
  MagicError,
  ModelError,
  TruncatedFileError,
  VersionError,
} from "./errors.js";

const USAGE = `usage: plm-bridge export --db <store.rpdb> --out <store.rpde>
                         [--model ${DEFAULTS.model}] [--max-tokens ${DEFAULTS.maxTokens}]
                         [--layer N] [--batch-size ${DEFAULTS.batchSize}]
                         [--include-special-tokens] [--manifest <path>]`;

function fail(code: number, message: string): never {
  process.stderr.write(message + "\n");
  process.exit(code);
}

function integer(raw: string, flag: string): number {
  const value = Number(raw);
  if (!Number.isInteger(value)) fail(1, `${flag} expects an integer, got ${raw}`);
  return value;
}

export function main(argv: string[]): void {
  if (argv[0] === "--version") {
    process.stdout.write("plm-bridge 0.1.0\n");
    return;
  }
  if (argv[0] !== "export") {
    fail(1, USAGE);
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        db: { type: "string" },
        out: { type: "string" },
        model: { type: "string", default: DEFAULTS.model },
        "max-tokens": { type: "string", default: String(DEFAULTS.maxTokens) },
        layer: { type: "string" },
        "batch-size": { type: "string", default: String(DEFAULTS.batchSize) },
        "include-special-tokens": { type: "boolean", default: false },
        manifest: { type: "string" },
        help: { type: "boolean", default: false },
      },
    }));
  } catch (exc) {
    fail(1, `${(exc as Error).message}\n${USAGE}`);
  }
  if (values.help) {
    process.stdout.write(USAGE + "\n");
    return;
  }
  if (!values.db || !values.out) {
    fail(1, `--db and --out are required\n${USAGE}`);
  }

  try {
    const summary = exportEmbeddings(
      values.db,
      {
        model: values.model!,
        maxTokens: integer(values["max-tokens"]!, "--max-tokens"),
        batchSize: integer(values["batch-size"]!, "--batch-size"),
        layer: values.layer === undefined ? null : integer(values.layer, "--layer"),
        includeSpecialTokens: values["include-special-tokens"]!,
        out: values.out,
        manifest: values.manifest,
      },
      (message) => process.stderr.write(`warning: ${message}\n`),
    );
    process.stdout.write(JSON.stringify(summary, null, 2) + "\n");
  } catch (exc) {
    if (exc instanceof ConfigError || exc instanceof ModelError) {
      fail(1, `error: ${exc.message}`);
    }
    if (
      exc instanceof MagicError ||
      exc instanceof VersionError ||
      exc instanceof ChecksumError ||
      exc instanceof TruncatedFileError ||
      exc instanceof FormatError ||
      (exc instanceof Error && (exc as NodeJS.ErrnoException).code === "ENOENT")
    ) {
      fail(2, `error: ${exc.message}`);
    }
    if (exc instanceof BridgeError) {
      fail(1, `error: ${exc.message}`);
    }
    throw exc;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2));
}
