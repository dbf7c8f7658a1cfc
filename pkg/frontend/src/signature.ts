/**
 * Receipt signature checking.
 *
 * A detached signature travels as base64 of
 *   "EDSG" || version:u8 || signer_fingerprint:32 bytes || sig_len:u16be || sig
 * where the signature is RSA-PSS (SHA-256, 32-byte salt) over the ASCII
 * bytes of the verification code, and the signer fingerprint is the SHA-256
 * of the signer's DER-encoded SubjectPublicKeyInfo.
 */

import { bytesToHex } from './framing.js';

const DETACHED_MAGIC = [0x45, 0x44, 0x53, 0x47]; // "EDSG"
const FORMAT_VERSION = 1;

export interface DetachedSignature {
  signerFingerprint: string;
  signatureBytes: Uint8Array;
}

export function parseDetachedSignature(data: Uint8Array): DetachedSignature {
  if (data.length < 39 || !DETACHED_MAGIC.every((b, i) => data[i] === b)) {
    throw new Error('not a detached signature message');
  }
  if (data[4] !== FORMAT_VERSION) {
    throw new Error(`unsupported signature version ${data[4]}`);
  }
  const fingerprint = bytesToHex(data.slice(5, 37));
  const sigLen = new DataView(data.buffer, data.byteOffset).getUint16(37, false);
  const sig = data.slice(39, 39 + sigLen);
  if (sig.length !== sigLen || 39 + sigLen !== data.length) {
    throw new Error('signature length mismatch');
  }
  return { signerFingerprint: fingerprint, signatureBytes: sig };
}

export function base64ToBytes(b64: string): Uint8Array {
  const raw = atob(b64.trim());
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) {
    out[i] = raw.charCodeAt(i);
  }
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let raw = '';
  for (const b of bytes) {
    raw += String.fromCharCode(b);
  }
  return btoa(raw);
}

/** Extracts the DER body of the first PEM block in `pem`. */
export function pemToDer(pem: string): Uint8Array {
  const match = pem.match(/-----BEGIN [^-]+-----([\s\S]*?)-----END [^-]+-----/);
  if (!match || match[1] === undefined) {
    throw new Error('no PEM block found');
  }
  return base64ToBytes(match[1].replace(/\s+/g, ''));
}

/** SHA-256 hex of the DER SubjectPublicKeyInfo: the key's fingerprint. */
export async function fingerprintOfPublicKeyPem(pem: string): Promise<string> {
  const der = pemToDer(pem);
  const digest = await crypto.subtle.digest('SHA-256', der as BufferSource);
  return bytesToHex(new Uint8Array(digest));
}

export async function importVerifyKey(pem: string): Promise<CryptoKey> {
  const der = pemToDer(pem);
  return crypto.subtle.importKey(
    'spki',
    der as BufferSource,
    { name: 'RSA-PSS', hash: 'SHA-256' },
    false,
    ['verify'],
  );
}

/**
 * True iff `signatureB64` is a valid detached signature over the ASCII
 * `message` by the key in `publicKeyPem`, and that key's fingerprint matches
 * the one embedded in the signature blob.
 */
export async function verifyDetachedSignature(
  message: string,
  signatureB64: string,
  publicKeyPem: string,
): Promise<boolean> {
  let parsed: DetachedSignature;
  try {
    parsed = parseDetachedSignature(base64ToBytes(signatureB64));
  } catch {
    return false;
  }
  const expectedFingerprint = await fingerprintOfPublicKeyPem(publicKeyPem);
  if (parsed.signerFingerprint !== expectedFingerprint) {
    return false;
  }
  const key = await importVerifyKey(publicKeyPem);
  return crypto.subtle.verify(
    { name: 'RSA-PSS', saltLength: 32 },
    key,
    parsed.signatureBytes as BufferSource,
    new TextEncoder().encode(message) as BufferSource,
  );
}
