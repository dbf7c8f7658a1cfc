/**
 * Fetch client for the two ballot services and the published static lists.
 *
 * The client only ever talks to the documented endpoints: GET /v1/health,
 * POST /v1/authenticate on the authentication server; GET /v1/ballot,
 * POST /v1/vote on the vote server (reached through the anonymizing relay);
 * and the plain-text published list files.
 */

export type FetchFn = typeof fetch;

export interface HealthInfo {
  status: string;
  role: string;
  ballotId: string;
  sealState: string;
  signingFingerprint: string;
  tlsFingerprint: string | null;
}

export interface BallotInfo {
  ballotId: string;
  question: string;
  choices: string[];
  allowWriteIn: boolean;
}

export interface AuthorizationGrant {
  envelope: string;
  pin: string | null;
  signerFingerprint: string;
  reissued: boolean;
}

export interface Receipt {
  verificationCode: string;
  signature: string;
  timestamp: string;
  randomString: string;
}

export interface PublishedLists {
  usedTokens: Array<{ token: string; username: string; timestamp: string }>;
  unusedTokens: string[];
  verificationCodes: string[];
  finalVotes: Array<{ code: string; vote: string }>;
  totals: Map<string, number>;
}

/** The server's error body, shown to the voter verbatim. */
export class ServerError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
  ) {
    super(`server answered ${status}: ${code}`);
  }
}

async function requestJson(
  fetchFn: FetchFn,
  url: string,
  init?: RequestInit,
): Promise<unknown> {
  const response = await fetchFn(url, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const code =
      typeof body === 'object' && body !== null && 'error' in body
        ? String((body as { error: unknown }).error)
        : JSON.stringify(body);
    throw new ServerError(response.status, code);
  }
  return body;
}

export async function getHealth(fetchFn: FetchFn, baseUrl: string): Promise<HealthInfo> {
  const body = (await requestJson(fetchFn, `${baseUrl}/v1/health`)) as Record<string, unknown>;
  return {
    status: String(body.status),
    role: String(body.role),
    ballotId: String(body.ballot_id),
    sealState: String(body.seal_state),
    signingFingerprint: String(body.signing_fingerprint),
    tlsFingerprint: body.tls_fingerprint == null ? null : String(body.tls_fingerprint),
  };
}

export async function getBallot(fetchFn: FetchFn, voteBaseUrl: string): Promise<BallotInfo> {
  const body = (await requestJson(fetchFn, `${voteBaseUrl}/v1/ballot`)) as Record<string, unknown>;
  return {
    ballotId: String(body.ballot_id),
    question: String(body.question),
    choices: (body.choices as unknown[]).map(String),
    allowWriteIn: Boolean(body.allow_write_in),
  };
}

export async function postAuthenticate(
  fetchFn: FetchFn,
  authBaseUrl: string,
  username: string,
  password: string,
  voteToken: string,
): Promise<AuthorizationGrant> {
  const body = (await requestJson(fetchFn, `${authBaseUrl}/v1/authenticate`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ username, password, vote_token: voteToken }),
  })) as Record<string, unknown>;
  return {
    envelope: String(body.envelope),
    pin: body.pin == null ? null : String(body.pin),
    signerFingerprint: String(body.signer_fingerprint),
    reissued: Boolean(body.reissued),
  };
}

export async function postVote(
  fetchFn: FetchFn,
  voteBaseUrl: string,
  envelope: string,
  choice: string,
  pin: string | null,
): Promise<Receipt> {
  const body = (await requestJson(fetchFn, `${voteBaseUrl}/v1/vote`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ envelope, choice, pin }),
  })) as Record<string, unknown>;
  return {
    verificationCode: String(body.verification_code),
    signature: String(body.signature),
    timestamp: String(body.timestamp),
    randomString: String(body.random_string),
  };
}

// --- published lists ------------------------------------------------------------

async function fetchLines(fetchFn: FetchFn, url: string): Promise<string[] | null> {
  const response = await fetchFn(url);
  if (response.status === 404) {
    return null;
  }
  if (!response.ok) {
    throw new ServerError(response.status, await response.text());
  }
  const text = await response.text();
  // Each published file opens with "# ballot_id: <id>" comment lines.
  return text.split('\n').filter((line) => line.length > 0 && !line.startsWith('#'));
}

/**
 * Loads whatever list files have been published under `listsUrl`. Files that
 * are not there yet (election still running) come back empty; the final list
 * and totals may legitimately lag the code list.
 */
export async function fetchPublishedLists(
  fetchFn: FetchFn,
  listsUrl: string,
): Promise<PublishedLists> {
  const base = listsUrl.replace(/\/+$/, '');
  const [used, unused, codes, final, totals] = await Promise.all([
    fetchLines(fetchFn, `${base}/used_tokens.txt`),
    fetchLines(fetchFn, `${base}/unused_tokens.txt`),
    fetchLines(fetchFn, `${base}/verification_codes.txt`),
    fetchLines(fetchFn, `${base}/final_votes.txt`),
    fetchLines(fetchFn, `${base}/totals.txt`),
  ]);
  if (used === null && unused === null && codes === null && final === null && totals === null) {
    throw new ServerError(404, 'no published lists at this address');
  }
  return {
    usedTokens: (used ?? []).map((row) => {
      const [token = '', username = '', timestamp = ''] = row.split('\t');
      return { token, username, timestamp };
    }),
    unusedTokens: unused ?? [],
    verificationCodes: codes ?? [],
    finalVotes: (final ?? []).map((row) => {
      const tab = row.indexOf('\t');
      return { code: row.slice(0, tab), vote: row.slice(tab + 1) };
    }),
    totals: new Map(
      (totals ?? []).map((row) => {
        const tab = row.indexOf('\t');
        return [row.slice(0, tab), Number(row.slice(tab + 1))];
      }),
    ),
  };
}

export async function fetchPublishedServerKey(
  fetchFn: FetchFn,
  listsUrl: string,
): Promise<string | null> {
  const base = listsUrl.replace(/\/+$/, '');
  const response = await fetchFn(`${base}/votesysmgr_public.pem`);
  if (response.status === 404) {
    return null;
  }
  if (!response.ok) {
    throw new ServerError(response.status, await response.text());
  }
  return response.text();
}
