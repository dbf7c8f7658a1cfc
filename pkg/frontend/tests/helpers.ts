import { readFileSync } from 'node:fs';
import { join } from 'node:path';

import type { FetchFn, PublishedLists, Receipt } from '../src/api.js';
import { fetchPublishedLists } from '../src/api.js';

/** Serves a fixture directory the way a static published-lists host would. */
export function fileFetch(dir: string): FetchFn {
  return async (input) => {
    const url = typeof input === 'string' ? input : input instanceof URL ? input.href : input.url;
    const name = url.split('/').pop() ?? '';
    try {
      const body = readFileSync(join(dir, name));
      return new Response(body, { status: 200 });
    } catch {
      return new Response('not found', { status: 404 });
    }
  };
}

export async function loadPublished(dir: string): Promise<PublishedLists> {
  return fetchPublishedLists(fileFetch(dir), 'http://lists.test/published');
}

export interface ReceiptFixture {
  vote: string;
  receipt: Receipt;
}

export function loadReceiptFixture(path: string): ReceiptFixture {
  const doc = JSON.parse(readFileSync(path, 'utf-8')) as {
    vote: string;
    receipt: {
      verification_code: string;
      signature: string;
      timestamp: string;
      random_string: string;
    };
  };
  return {
    vote: doc.vote,
    receipt: {
      verificationCode: doc.receipt.verification_code,
      signature: doc.receipt.signature,
      timestamp: doc.receipt.timestamp,
      randomString: doc.receipt.random_string,
    },
  };
}
