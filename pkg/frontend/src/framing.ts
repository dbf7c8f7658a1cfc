/**
 * Verification-code recomputation, shared byte-for-byte with the server.
 *
 * The code is the SHA-256 hex digest of the framed triple
 *   len(vote) || vote || len(timestamp) || timestamp || len(random) || random
 * with 4-byte big-endian length prefixes. The framing is injective, so a
 * voter recomputing the digest from their receipt fields gets the server's
 * code exactly or has proof of a discrepancy.
 */

export const TOKEN_CHARSET =
  'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.';
export const USERNAME_CHARSET =
  'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.@-';
export const USERNAME_MAX_LENGTH = 64;
export const DEFAULT_TOKEN_LENGTH = 32;
export const PIN_LENGTH = 6;

const RFC3339_UTC = /^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$/;

export function isRfc3339Utc(timestamp: string): boolean {
  return RFC3339_UTC.test(timestamp);
}

function allIn(value: string, charset: string): boolean {
  for (const c of value) {
    if (!charset.includes(c)) {
      return false;
    }
  }
  return true;
}

/** Mirrors the server's charset/length rules so bad input never leaves the browser. */
export function validateUsername(value: string): boolean {
  return value.length >= 1 && value.length <= USERNAME_MAX_LENGTH && allIn(value, USERNAME_CHARSET);
}

export function validateToken(value: string, length: number = DEFAULT_TOKEN_LENGTH): boolean {
  return value.length === length && allIn(value, TOKEN_CHARSET);
}

export function validatePin(value: string): boolean {
  return value.length === PIN_LENGTH && /^[0-9]+$/.test(value);
}

function u32be(n: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, n, false);
  return out;
}

export function canonicalReceiptBytes(
  vote: Uint8Array,
  timestamp: string,
  randomString: string,
): Uint8Array {
  if (!isRfc3339Utc(timestamp)) {
    throw new Error(`timestamp not RFC-3339 UTC with seconds precision: ${timestamp}`);
  }
  if (!allIn(randomString, TOKEN_CHARSET)) {
    throw new Error('random string outside its charset');
  }
  const encoder = new TextEncoder();
  const ts = encoder.encode(timestamp);
  const rnd = encoder.encode(randomString);
  const out = new Uint8Array(12 + vote.length + ts.length + rnd.length);
  let offset = 0;
  for (const part of [u32be(vote.length), vote, u32be(ts.length), ts, u32be(rnd.length), rnd]) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes)
    .map((b) => b.toString(16).padStart(2, '0'))
    .join('');
}

/** SHA-256 hex of the framed triple, via the Web Crypto API. */
export async function computeVerificationCode(
  vote: string,
  timestamp: string,
  randomString: string,
): Promise<string> {
  const framed = canonicalReceiptBytes(new TextEncoder().encode(vote), timestamp, randomString);
  const digest = await crypto.subtle.digest('SHA-256', framed as BufferSource);
  return bytesToHex(new Uint8Array(digest));
}
