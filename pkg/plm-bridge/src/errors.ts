export class BridgeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** Bad flag or config value. */
export class ConfigError extends BridgeError {}

/** Unknown or unloadable model identifier. */
export class ModelError extends BridgeError {}

/** File does not start with the expected magic bytes. */
export class MagicError extends BridgeError {}

/** File carries a container version this reader does not understand. */
export class VersionError extends BridgeError {}

/** File ended before a declared field; carries the failing offset. */
export class TruncatedFileError extends BridgeError {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(`${message} at byte offset ${offset}`);
    this.offset = offset;
  }
}

/** Trailing checksum does not match the preceding bytes. */
export class ChecksumError extends BridgeError {}

/** Structurally invalid contents behind a valid header. */
export class FormatError extends BridgeError {}
