/**
 * Deterministic subword tokenizer for the reference encoder.
 *
 * Words are whitespace-delimited; words longer than PIECE_LEN are split
 * into fixed-width pieces with a "##" continuation marker, wordpiece
 * style, so the subword count for a text is a pure function of the
 * text. Position 0 of every encoding is the CLS piece.
 */

import { ConfigError } from "./errors.js";

export const CLS = "[CLS]";
export const SEP = "[SEP]";

const PIECE_LEN = 6;

/** Subword pieces for a text, specials excluded. */
export function subwords(text: string): string[] {
  const pieces: string[] = [];
  for (const word of text.split(/\s+/)) {
    if (!word) continue;
    if (word.length <= PIECE_LEN) {
      pieces.push(word);
      continue;
    }
    pieces.push(word.slice(0, PIECE_LEN));
    for (let at = PIECE_LEN; at < word.length; at += PIECE_LEN) {
      pieces.push("##" + word.slice(at, at + PIECE_LEN));
    }
  }
  return pieces;
}

export interface Encoding {
  /** Model input, CLS first, truncated to maxTokens positions. */
  pieces: string[];
  /** Subword count before truncation, specials excluded. */
  bodyCount: number;
  truncated: boolean;
}

export interface EncodeOptions {
  maxTokens: number;
  includeSpecialTokens: boolean;
}

/**
 * Encode one text. With includeSpecialTokens the input is
 * CLS + subwords + SEP and truncation preserves the trailing SEP;
 * without it the input is CLS + subwords. Either way the encoding
 * never exceeds maxTokens positions.
 */
export function encode(text: string, options: EncodeOptions): Encoding {
  const { maxTokens, includeSpecialTokens } = options;
  if (!Number.isInteger(maxTokens) || maxTokens < 2) {
    throw new ConfigError(`maxTokens must be an integer >= 2, got ${maxTokens}`);
  }
  const body = subwords(text);
  const budget = maxTokens - 1 - (includeSpecialTokens ? 1 : 0);
  const truncated = body.length > budget;
  const kept = truncated ? body.slice(0, budget) : body;
  const pieces = [CLS, ...kept];
  if (includeSpecialTokens) pieces.push(SEP);
  return { pieces, bodyCount: body.length, truncated };
}
