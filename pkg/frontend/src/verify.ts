/**
 * The voter's four receipt checks, same semantics as the election tooling's
 * voter verification:
 *
 *   1. the verification code recomputes from (vote, timestamp, random string)
 *   2. the receipt signature verifies under the vote server's published key
 *   3. the code appears on the published code list
 *   4. the published final list's row for the code matches the claimed vote
 *
 * Check 4 is indeterminate until the final list is published; checks 2 and 3
 * are indeterminate while their inputs cannot be fetched.
 */

import type { PublishedLists, Receipt } from './api.js';
import { computeVerificationCode } from './framing.js';
import { verifyDetachedSignature } from './signature.js';

export type CheckOutcome = 'pass' | 'fail' | 'indeterminate';

export interface CheckReport {
  codeRecomputed: CheckOutcome;
  signatureValid: CheckOutcome;
  codePublished: CheckOutcome;
  finalRowMatches: CheckOutcome;
}

export function allChecksPass(report: CheckReport): boolean {
  return (
    report.codeRecomputed === 'pass' &&
    report.signatureValid === 'pass' &&
    report.codePublished === 'pass' &&
    report.finalRowMatches === 'pass'
  );
}

export async function runReceiptChecks(
  receipt: Receipt,
  claimedVote: string,
  published: PublishedLists | null,
  serverKeyPem: string | null,
): Promise<CheckReport> {
  const recomputed = await computeVerificationCode(
    claimedVote,
    receipt.timestamp,
    receipt.randomString,
  );
  const codeRecomputed: CheckOutcome =
    recomputed === receipt.verificationCode ? 'pass' : 'fail';

  let signatureValid: CheckOutcome = 'indeterminate';
  if (serverKeyPem !== null) {
    signatureValid = (await verifyDetachedSignature(
      receipt.verificationCode,
      receipt.signature,
      serverKeyPem,
    ))
      ? 'pass'
      : 'fail';
  }

  let codePublished: CheckOutcome = 'indeterminate';
  let finalRowMatches: CheckOutcome = 'indeterminate';
  if (published !== null) {
    codePublished = published.verificationCodes.includes(receipt.verificationCode)
      ? 'pass'
      : 'fail';
    if (published.finalVotes.length > 0 || published.totals.size > 0) {
      finalRowMatches = published.finalVotes.some(
        (row) => row.code === receipt.verificationCode && row.vote === claimedVote,
      )
        ? 'pass'
        : 'fail';
    }
  }

  return { codeRecomputed, signatureValid, codePublished, finalRowMatches };
}
