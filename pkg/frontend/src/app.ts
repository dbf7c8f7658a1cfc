/**
 * The voter-facing single-page application.
 *
 * Four screens in casting order: server fingerprints, authenticate, cast,
 * published-lists check. Everything sensitive stays in the in-memory
 * session; each action runs at most one request at a time.
 */

import {
  type FetchFn,
  ServerError,
  fetchPublishedLists,
  fetchPublishedServerKey,
  getBallot,
  getHealth,
  postAuthenticate,
  postVote,
} from './api.js';
import {
  computeVerificationCode,
  validatePin,
  validateToken,
  validateUsername,
} from './framing.js';
import { base64ToBytes, parseDetachedSignature } from './signature.js';
import { authorizationFileText, parseAuthorizationFile, triggerDownload } from './save.js';
import { newSession, type VoterSession } from './session.js';
import { allChecksPass, runReceiptChecks, type CheckOutcome } from './verify.js';

export interface AppOptions {
  fetchFn?: FetchFn;
  authUrl?: string;
  voteUrl?: string;
  listsUrl?: string;
}

const CHECK_LABELS: Record<string, string> = {
  codeRecomputed: 'verification code recomputes from your vote, timestamp and random string',
  signatureValid: "receipt signature verifies under the vote server's published key",
  codePublished: 'your code appears on the published code list',
  finalRowMatches: 'the published final list row for your code matches your vote',
};

export function mountApp(root: HTMLElement, options: AppOptions = {}): void {
  const fetchFn: FetchFn = options.fetchFn ?? ((...args) => fetch(...args));
  const doc = root.ownerDocument;
  const session: VoterSession = newSession();
  let ballotId = '';
  let pinEnabled = true;

  root.innerHTML = `
    <h1>eballot voter</h1>

    <section id="screen-connect">
      <h2>1. Check the servers you are talking to</h2>
      <p>Compare each fingerprint you received with your credentials against
      what the server presents. A value the server reports about itself cannot
      prove the connection; check your browser's certificate view too.</p>
      <label>Authentication server URL
        <input id="auth-url" value="${options.authUrl ?? ''}">
      </label>
      <label>Expected auth server fingerprint
        <input id="auth-pin-fpr" placeholder="from your credential sheet">
      </label>
      <label>Vote server URL (the anonymizing relay address)
        <input id="vote-url" value="${options.voteUrl ?? ''}">
      </label>
      <label>Expected vote server fingerprint
        <input id="vote-pin-fpr" placeholder="from your credential sheet">
      </label>
      <button id="fetch-identities">Fetch server identities</button>
      <div id="identity-report" hidden>
        <table>
          <tr><th></th><th>expected (yours)</th><th>presented (server)</th></tr>
          <tr><td>auth server</td><td id="auth-expected"></td><td id="auth-presented"></td></tr>
          <tr><td>vote server</td><td id="vote-expected"></td><td id="vote-presented"></td></tr>
        </table>
        <label><input type="checkbox" id="fpr-confirm">
          I compared the fingerprints myself and they match</label>
        <button id="connect-continue" disabled>Continue</button>
      </div>
      <p id="connect-error" class="error" hidden></p>
    </section>

    <section id="screen-authenticate" hidden>
      <h2>2. Authenticate and obtain your vote authorization</h2>
      <label>Username <input id="username" autocomplete="off"></label>
      <label>Password <input id="password" type="password" autocomplete="off"></label>
      <label>Vote token <input id="vote-token" autocomplete="off"></label>
      <p id="validation-error" class="error" hidden></p>
      <button id="authenticate">Authenticate</button>
      <p id="auth-error" class="error" hidden></p>
      <div id="authorization-view" hidden>
        <h3>Your vote authorization</h3>
        <p id="reissue-note" hidden>This is the same authorization you were
        issued before; the old one is still the valid one.</p>
        <textarea id="authorization-envelope" rows="6" readonly></textarea>
        <p>Your PIN (memorize it, it is not saved anywhere):
          <strong id="pin-display"></strong></p>
        <button id="save-authorization">Save authorization to a file</button>
        <button id="to-cast">Continue to cast</button>
      </div>
    </section>

    <section id="screen-cast" hidden>
      <h2>3. Cast your vote</h2>
      <p id="ballot-question"></p>
      <label>Authorization (from this session, or paste your saved file)
        <textarea id="cast-envelope" rows="6"></textarea>
      </label>
      <div id="choices"></div>
      <label id="pin-row">PIN <input id="cast-pin" autocomplete="off"></label>
      <button id="cast">Cast vote</button>
      <p id="cast-error" class="error" hidden></p>
      <div id="receipt-view" hidden>
        <h3>Your receipt</h3>
        <dl>
          <dt>verification code</dt><dd id="receipt-code"></dd>
          <dt>timestamp</dt><dd id="receipt-timestamp"></dd>
          <dt>random string</dt><dd id="receipt-random"></dd>
          <dt>signature</dt><dd id="receipt-signature-status"></dd>
        </dl>
        <p id="recompute-banner"></p>
        <button id="to-check">Check the published lists later</button>
      </div>
    </section>

    <section id="screen-check" hidden>
      <h2>4. Check the published lists</h2>
      <label>Published lists URL
        <input id="lists-url" value="${options.listsUrl ?? ''}">
      </label>
      <label>The vote you cast <input id="claimed-vote"></label>
      <button id="run-checks">Run the four checks</button>
      <p id="check-error" class="error" hidden></p>
      <div id="check-report" hidden>
        <ul id="check-rows"></ul>
        <p id="check-alert" class="error" hidden></p>
        <p id="check-verdict"></p>
      </div>
    </section>
  `;

  const byId = <T extends HTMLElement>(id: string): T => {
    const el = doc.getElementById(id);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el as T;
  };
  const show = (el: HTMLElement) => el.removeAttribute('hidden');
  const hide = (el: HTMLElement) => el.setAttribute('hidden', '');
  const setError = (el: HTMLElement, message: string) => {
    el.textContent = message;
    show(el);
  };

  const describeServerError = (e: unknown): string => {
    if (e instanceof ServerError) {
      return `the server answered ${e.status} with error "${e.code}"`;
    }
    return `request failed: ${e instanceof Error ? e.message : String(e)}`;
  };

  // --- screen 1: fingerprints ---------------------------------------------------

  byId<HTMLButtonElement>('fetch-identities').addEventListener('click', async () => {
    const button = byId<HTMLButtonElement>('fetch-identities');
    const errorEl = byId('connect-error');
    hide(errorEl);
    button.disabled = true;
    try {
      session.authServer.baseUrl = byId<HTMLInputElement>('auth-url').value.replace(/\/+$/, '');
      session.voteServer.baseUrl = byId<HTMLInputElement>('vote-url').value.replace(/\/+$/, '');
      session.authServer.pinnedFingerprint = byId<HTMLInputElement>('auth-pin-fpr').value.trim();
      session.voteServer.pinnedFingerprint = byId<HTMLInputElement>('vote-pin-fpr').value.trim();
      const [authHealth, voteHealth] = await Promise.all([
        getHealth(fetchFn, session.authServer.baseUrl),
        getHealth(fetchFn, session.voteServer.baseUrl),
      ]);
      session.authServer.presentedFingerprint = authHealth.tlsFingerprint;
      session.voteServer.presentedFingerprint = voteHealth.tlsFingerprint;
      ballotId = authHealth.ballotId;
      byId('auth-expected').textContent = session.authServer.pinnedFingerprint || '(none entered)';
      byId('vote-expected').textContent = session.voteServer.pinnedFingerprint || '(none entered)';
      byId('auth-presented').textContent =
        authHealth.tlsFingerprint ?? '(none: plain-http run)';
      byId('vote-presented').textContent =
        voteHealth.tlsFingerprint ?? '(none: plain-http run)';
      show(byId('identity-report'));
    } catch (e) {
      setError(errorEl, describeServerError(e));
    } finally {
      button.disabled = false;
    }
  });

  byId<HTMLInputElement>('fpr-confirm').addEventListener('change', (event) => {
    byId<HTMLButtonElement>('connect-continue').disabled =
      !(event.target as HTMLInputElement).checked;
  });

  byId<HTMLButtonElement>('connect-continue').addEventListener('click', () => {
    session.authServer.confirmed = true;
    session.voteServer.confirmed = true;
    hide(byId('screen-connect'));
    show(byId('screen-authenticate'));
  });

  // --- screen 2: authenticate ---------------------------------------------------

  byId<HTMLButtonElement>('authenticate').addEventListener('click', async () => {
    const button = byId<HTMLButtonElement>('authenticate');
    const validationEl = byId('validation-error');
    const errorEl = byId('auth-error');
    hide(validationEl);
    hide(errorEl);

    const username = byId<HTMLInputElement>('username').value;
    const password = byId<HTMLInputElement>('password').value;
    const voteToken = byId<HTMLInputElement>('vote-token').value;
    // Reject malformed fields locally; nothing leaves the browser.
    if (!validateUsername(username)) {
      setError(validationEl, 'username: 1-64 characters from letters, digits, _ . @ -');
      return;
    }
    if (password.length === 0) {
      setError(validationEl, 'password must not be empty');
      return;
    }
    if (!validateToken(voteToken)) {
      setError(
        validationEl,
        'vote token: exactly 32 characters from letters, digits, _ and . ' +
          '(check for spaces and lookalike characters)',
      );
      return;
    }

    button.disabled = true;
    try {
      const grant = await postAuthenticate(
        fetchFn,
        session.authServer.baseUrl,
        username,
        password,
        voteToken,
      );
      session.authorizationEnvelope = grant.envelope;
      session.pin = grant.pin;
      pinEnabled = grant.pin !== null;
      byId<HTMLTextAreaElement>('authorization-envelope').value = grant.envelope;
      byId('pin-display').textContent = grant.pin ?? '(no PIN for this ballot)';
      if (grant.reissued) {
        show(byId('reissue-note'));
      } else {
        hide(byId('reissue-note'));
      }
      show(byId('authorization-view'));
    } catch (e) {
      setError(errorEl, describeServerError(e));
    } finally {
      button.disabled = false;
    }
  });

  byId<HTMLButtonElement>('save-authorization').addEventListener('click', () => {
    if (session.authorizationEnvelope === null) {
      return;
    }
    triggerDownload(
      doc,
      `vote-authorization-${ballotId || 'ballot'}.txt`,
      authorizationFileText(session.authorizationEnvelope, ballotId, pinEnabled),
    );
  });

  byId<HTMLButtonElement>('to-cast').addEventListener('click', async () => {
    hide(byId('screen-authenticate'));
    show(byId('screen-cast'));
    if (session.authorizationEnvelope !== null) {
      byId<HTMLTextAreaElement>('cast-envelope').value = session.authorizationEnvelope;
    }
    if (!pinEnabled) {
      hide(byId('pin-row'));
    }
    try {
      const ballot = await getBallot(fetchFn, session.voteServer.baseUrl);
      ballotId = ballot.ballotId;
      byId('ballot-question').textContent = ballot.question;
      const choicesEl = byId('choices');
      choicesEl.innerHTML = '';
      for (const choice of ballot.choices) {
        const label = doc.createElement('label');
        const radio = doc.createElement('input');
        radio.type = 'radio';
        radio.name = 'choice';
        radio.value = choice;
        label.appendChild(radio);
        label.appendChild(doc.createTextNode(` ${choice}`));
        choicesEl.appendChild(label);
      }
      if (ballot.allowWriteIn) {
        const label = doc.createElement('label');
        const radio = doc.createElement('input');
        radio.type = 'radio';
        radio.name = 'choice';
        radio.value = '';
        radio.id = 'write-in-radio';
        const text = doc.createElement('input');
        text.type = 'text';
        text.id = 'write-in-text';
        text.placeholder = 'write-in';
        label.appendChild(radio);
        label.appendChild(doc.createTextNode(' write-in: '));
        label.appendChild(text);
        choicesEl.appendChild(label);
      }
    } catch (e) {
      setError(byId('cast-error'), describeServerError(e));
    }
  });

  // --- screen 3: cast -------------------------------------------------------------

  const selectedChoice = (): string | null => {
    const radios = root.querySelectorAll<HTMLInputElement>('input[name="choice"]');
    for (const radio of radios) {
      if (radio.checked) {
        if (radio.id === 'write-in-radio') {
          const text = byId<HTMLInputElement>('write-in-text').value.trim();
          return text.length > 0 ? text : null;
        }
        return radio.value;
      }
    }
    return null;
  };

  byId<HTMLButtonElement>('cast').addEventListener('click', async () => {
    const button = byId<HTMLButtonElement>('cast');
    const errorEl = byId('cast-error');
    hide(errorEl);

    const envelope = parseAuthorizationFile(byId<HTMLTextAreaElement>('cast-envelope').value);
    const choice = selectedChoice();
    const pin = pinEnabled ? byId<HTMLInputElement>('cast-pin').value : null;
    if (envelope.length === 0) {
      setError(errorEl, 'paste your vote authorization first');
      return;
    }
    if (choice === null) {
      setError(errorEl, 'pick a choice first');
      return;
    }
    if (pinEnabled && !validatePin(pin ?? '')) {
      setError(errorEl, 'the PIN is exactly 6 digits');
      return;
    }

    button.disabled = true;
    try {
      const receipt = await postVote(
        fetchFn,
        session.voteServer.baseUrl,
        envelope,
        choice,
        pin,
      );
      session.receipt = receipt;
      session.castVote = choice;
      byId('receipt-code').textContent = receipt.verificationCode;
      byId('receipt-timestamp').textContent = receipt.timestamp;
      byId('receipt-random').textContent = receipt.randomString;
      byId('receipt-signature-status').textContent = describeSignatureStatus(receipt.signature);

      // Recompute the code locally right away; a mismatch means the response
      // does not belong to the vote that was just submitted.
      const recomputed = await computeVerificationCode(
        choice,
        receipt.timestamp,
        receipt.randomString,
      );
      const banner = byId('recompute-banner');
      if (recomputed === receipt.verificationCode) {
        banner.textContent = 'code verified locally: match';
        banner.className = 'match';
      } else {
        banner.textContent =
          'code verified locally: MISMATCH — this receipt does not match your vote. ' +
          'Save this page and report it to the ballot organizer or the tally official.';
        banner.className = 'mismatch';
      }
      show(byId('receipt-view'));
    } catch (e) {
      if (e instanceof ServerError && e.code === 'pin_mismatch') {
        setError(errorEl, 'wrong PIN. Your authorization is still valid; try again.');
      } else if (e instanceof ServerError && e.code === 'authorization_used') {
        setError(
          errorEl,
          'this authorization was already used to cast a vote. ' +
            'If that was not you, report it to the ballot organizer.',
        );
      } else {
        setError(errorEl, describeServerError(e));
      }
    } finally {
      button.disabled = false;
    }
  });

  const describeSignatureStatus = (signatureB64: string): string => {
    try {
      const parsed = parseDetachedSignature(base64ToBytes(signatureB64));
      return (
        `present, signed by key ${parsed.signerFingerprint.slice(0, 16)}…; ` +
        'cryptographic check runs against the published server key in step 4'
      );
    } catch (e) {
      return `unparseable: ${e instanceof Error ? e.message : String(e)}`;
    }
  };

  byId<HTMLButtonElement>('to-check').addEventListener('click', () => {
    hide(byId('screen-cast'));
    show(byId('screen-check'));
    if (session.castVote !== null) {
      byId<HTMLInputElement>('claimed-vote').value = session.castVote;
    }
  });

  // --- screen 4: published checks --------------------------------------------------

  byId<HTMLButtonElement>('run-checks').addEventListener('click', async () => {
    const button = byId<HTMLButtonElement>('run-checks');
    const errorEl = byId('check-error');
    hide(errorEl);
    if (session.receipt === null) {
      setError(errorEl, 'no receipt in this session; cast a vote first');
      return;
    }
    const claimedVote = byId<HTMLInputElement>('claimed-vote').value;
    if (claimedVote.length === 0) {
      setError(errorEl, 'enter the vote you cast');
      return;
    }

    button.disabled = true;
    try {
      const listsUrl = byId<HTMLInputElement>('lists-url').value;
      let published = null;
      let serverKey = null;
      let fetchFailure: string | null = null;
      try {
        [published, serverKey] = await Promise.all([
          fetchPublishedLists(fetchFn, listsUrl),
          fetchPublishedServerKey(fetchFn, listsUrl),
        ]);
      } catch (e) {
        fetchFailure = describeServerError(e);
      }
      const report = await runReceiptChecks(session.receipt, claimedVote, published, serverKey);

      const rows = byId('check-rows');
      rows.innerHTML = '';
      for (const [key, outcome] of Object.entries(report) as Array<[string, CheckOutcome]>) {
        const item = doc.createElement('li');
        item.textContent = `${CHECK_LABELS[key]}: ${outcome}`;
        item.className = `check-${outcome}`;
        rows.appendChild(item);
      }

      const alertEl = byId('check-alert');
      hide(alertEl);
      if (fetchFailure !== null) {
        setError(alertEl, `lists could not be fetched (${fetchFailure}); unresolved checks are marked indeterminate`);
      } else if (report.codePublished === 'fail') {
        setError(
          alertEl,
          'your verification code is NOT on the published list. ' +
            'Report it to the ballot organizer or the tally official.',
        );
      } else if (report.finalRowMatches === 'fail') {
        setError(
          alertEl,
          'the published final list does not match your vote. ' +
            'Report it to the ballot organizer or the tally official.',
        );
      }

      byId('check-verdict').textContent = allChecksPass(report)
        ? 'all four checks pass'
        : 'not all checks pass yet';
      show(byId('check-report'));
    } finally {
      button.disabled = false;
    }
  });
}
