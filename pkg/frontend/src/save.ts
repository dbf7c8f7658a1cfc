/**
 * Saving the authorization for later use.
 *
 * The file is deliberately plain text: the voter chose to keep a copy, the
 * PIN (never included here) is what protects a stolen authorization, and a
 * printed page must survive without tooling.
 */

export function authorizationFileText(
  envelopeB64: string,
  ballotId: string,
  pinEnabled: boolean,
): string {
  const pinNote = pinEnabled
    ? 'You will also need the PIN that was shown on screen. It is NOT in this\nfile; memorize it or write it down separately.'
    : 'This ballot does not use a PIN.';
  return [
    `Vote authorization for ballot: ${ballotId}`,
    '',
    'To cast your vote, open the voting page, paste the block below into the',
    '"authorization" field, pick your choice, and submit.',
    pinNote,
    '',
    'This authorization works exactly once.',
    '',
    '-----BEGIN VOTE AUTHORIZATION-----',
    envelopeB64,
    '-----END VOTE AUTHORIZATION-----',
    '',
  ].join('\n');
}

/** Pulls the base64 block back out of a saved file (or accepts bare base64). */
export function parseAuthorizationFile(text: string): string {
  const match = text.match(
    /-----BEGIN VOTE AUTHORIZATION-----\s*([\s\S]*?)\s*-----END VOTE AUTHORIZATION-----/,
  );
  const body = match && match[1] !== undefined ? match[1] : text;
  return body.replace(/\s+/g, '');
}

/** Offers `text` as a download named `filename`. */
export function triggerDownload(doc: Document, filename: string, text: string): void {
  const blob = new Blob([text], { type: 'text/plain' });
  const url = URL.createObjectURL(blob);
  const anchor = doc.createElement('a');
  anchor.href = url;
  anchor.download = filename;
  doc.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
