/**
 * The voter's in-memory session.
 *
 * Everything lives in this object and nowhere else: the PIN and the
 * authorization are never written to localStorage, sessionStorage, cookies,
 * or IndexedDB. Closing the tab forgets them, which is why the UI offers to
 * save the authorization to a file instead.
 *
 * The session also encodes the separation rule: the vote token is only ever
 * sent to the authentication server, the ballot choice only to the vote
 * server. Neither address learns the other secret.
 */

import type { Receipt } from './api.js';

export interface ServerEndpoint {
  baseUrl: string;
  pinnedFingerprint: string;
  presentedFingerprint: string | null;
  confirmed: boolean;
}

export interface VoterSession {
  authServer: ServerEndpoint;
  voteServer: ServerEndpoint;
  authorizationEnvelope: string | null;
  pin: string | null;
  receipt: Receipt | null;
  castVote: string | null;
}

export function newSession(): VoterSession {
  return {
    authServer: emptyEndpoint(),
    voteServer: emptyEndpoint(),
    authorizationEnvelope: null,
    pin: null,
    receipt: null,
    castVote: null,
  };
}

function emptyEndpoint(): ServerEndpoint {
  return { baseUrl: '', pinnedFingerprint: '', presentedFingerprint: null, confirmed: false };
}
