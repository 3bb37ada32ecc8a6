export { crc32c } from "./crc32c.js";
export { Cursor, Writer } from "./binio.js";
export { parseSequenceDb, readSequenceDb, hex } from "./rpdb.js";
export type { SequenceDb, SequenceEntry } from "./rpdb.js";
export { encodeRpde, parseRpde, readRpde, writeRpde } from "./rpde.js";
export type { EmbeddedMatrix, RpdeFile } from "./rpde.js";
export { CLS, SEP, encode, subwords } from "./tokenizer.js";
export type { Encoding, EncodeOptions } from "./tokenizer.js";
export { ReferenceEncoder, loadModel } from "./encoder.js";
export type { ModelSpec } from "./encoder.js";
export { DEFAULTS, exportEmbeddings } from "./bridge.js";
export type { BridgeConfig, ExportSummary } from "./bridge.js";
export {
  BridgeError,
  ChecksumError,
  ConfigError,
  FormatError,
  MagicError,
  ModelError,
  TruncatedFileError,
  VersionError,
} from "./errors.js";
