// @vitest-environment jsdom
/**
 * Scripted end-to-end session against the real services.
 *
 * The test builds a ballot with the command-line tools, spawns the
 * authentication server, the vote server, and the anonymizing relay as
 * subprocesses on free ports, and drives the actual app DOM with real
 * fetch through authenticate, save, cast, and receipt. It then stops the
 * servers, runs the post-election pipeline (unseal, export, publish,
 * tally), serves the published lists over plain HTTP, and finishes the
 * session on the published-check screen.
 */
import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { createServer, type Server } from 'node:http';
import { createServer as createNetServer, type AddressInfo } from 'node:net';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { afterAll, expect, test } from 'vitest';

import { mountApp } from '../src/app.js';

// --- process management ----------------------------------------------------------

const children: ChildProcess[] = [];
let listsServer: Server | null = null;
let workDir: string | null = null;

afterAll(async () => {
  for (const child of children) {
    if (child.exitCode === null) {
      child.kill('SIGKILL');
    }
  }
  if (listsServer !== null) {
    listsServer.closeAllConnections();
    await new Promise((resolve) => listsServer!.close(resolve));
  }
  if (workDir !== null) {
    rmSync(workDir, { recursive: true, force: true });
  }
});

function cli(...args: string[]): string {
  try {
    return execFileSync('python3', ['-m', 'eballot.cli', ...args], { encoding: 'utf-8' });
  } catch (e) {
    const err = e as { stderr?: string; message: string };
    throw new Error(`${args[0]} failed: ${err.message}\n${err.stderr ?? ''}`);
  }
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createNetServer();
    probe.listen(0, '127.0.0.1', () => {
      const address = probe.address();
      if (address === null || typeof address === 'string') {
        reject(new Error('no port assigned'));
        return;
      }
      const port = address.port;
      probe.close(() => resolve(port));
    });
  });
}

function serve(...args: string[]): ChildProcess {
  const child = spawn('python3', ['-m', 'eballot.cli', ...args], {
    stdio: ['ignore', 'ignore', 'pipe'],
  });
  let stderr = '';
  child.stderr?.on('data', (chunk: Buffer) => {
    stderr += chunk.toString();
  });
  child.on('exit', (code) => {
    if (code !== null && code !== 0) {
      console.error(`${args[0]} exited with ${code}:\n${stderr}`);
    }
  });
  children.push(child);
  return child;
}

function terminate(child: ChildProcess): Promise<void> {
  return new Promise((resolve) => {
    if (child.exitCode !== null) {
      resolve();
      return;
    }
    child.once('exit', () => resolve());
    child.kill('SIGTERM');
    setTimeout(() => {
      if (child.exitCode === null) {
        child.kill('SIGKILL');
      }
    }, 8000).unref();
  });
}

async function waitForHealth(base: string): Promise<void> {
  for (let i = 0; i < 240; i++) {
    try {
      const res = await fetch(`${base}/v1/health`);
      if (res.ok) {
        return;
      }
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`no healthy server at ${base}`);
}

function serveDir(dir: string): Promise<{ server: Server; port: number }> {
  return new Promise((resolve) => {
    const server = createServer((req, res) => {
      const name = (req.url ?? '').split('?')[0]!.split('/').pop() ?? '';
      try {
        const body = readFileSync(join(dir, name));
        res.writeHead(200, { 'content-type': 'text/plain' });
        res.end(body);
      } catch {
        res.writeHead(404);
        res.end('not found');
      }
    });
    server.listen(0, '127.0.0.1', () => {
      resolve({ server, port: (server.address() as AddressInfo).port });
    });
  });
}

// --- DOM driving helpers -----------------------------------------------------------

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing #${id}`);
  }
  return found as T;
}

function type(id: string, value: string): void {
  const input = el<HTMLInputElement | HTMLTextAreaElement>(id);
  input.value = value;
  input.dispatchEvent(new Event('input', { bubbles: true }));
}

async function waitFor(predicate: () => boolean, what: string): Promise<void> {
  for (let i = 0; i < 1200; i++) {
    if (predicate()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}`);
}

const visible = (id: string) => !el(id).hasAttribute('hidden');

function blobText(blob: Blob): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () => reject(reader.error);
    reader.readAsText(blob);
  });
}

// --- the session -------------------------------------------------------------------

test('full session against live servers, then the published checks', async () => {
  workDir = mkdtempSync(join(tmpdir(), 'eballot-ui-e2e-'));
  const root = join(workDir, 'ballot');
  const roster = join(workDir, 'roster.txt');
  writeFileSync(roster, 'alice\nbob\ncarol\n');

  cli(
    'setup-ballot',
    '--ballot-root', root,
    '--roster', roster,
    '--ballot-id', 'ui-e2e-2026',
    '--question', 'Adopt the new charter?',
    '--choice', 'yes',
    '--choice', 'no',
    '--reissue', 'server_store',
    '--no-tls',
  );
  const sealOut = cli('seal', '--ballot-root', root, '--service', 'all');
  const tokens = [...sealOut.matchAll(/UNSEAL TOKEN \(shown once\): (\S+)/g)].map((m) => m[1]!);
  expect(tokens).toHaveLength(2);

  const authPort = await freePort();
  const votePort = await freePort();
  const relayPort = await freePort();
  const authServer = serve('serve-auth', '--ballot-root', root, '--port', String(authPort));
  const voteServer = serve('serve-vote', '--ballot-root', root, '--port', String(votePort));
  const relay = serve(
    'serve-anon',
    '--ballot-root', root,
    '--port', String(relayPort),
    '--upstream', `http://127.0.0.1:${votePort}`,
  );
  const authBase = `http://127.0.0.1:${authPort}`;
  const relayBase = `http://127.0.0.1:${relayPort}`;
  await waitForHealth(authBase);
  await waitForHealth(relayBase);

  const bundle = readFileSync(join(root, 'credentials', 'alice.txt'), 'utf-8');
  const cred = (key: string): string => {
    const match = bundle.match(new RegExp(`^${key}: (.+)$`, 'm'));
    if (!match || match[1] === undefined) {
      throw new Error(`no ${key} in the credential bundle`);
    }
    return match[1];
  };

  document.body.innerHTML = '<div id="app"></div>';
  const downloads: Blob[] = [];
  let lastBlob: Blob | null = null;
  URL.createObjectURL = ((blob: Blob) => {
    lastBlob = blob;
    return 'blob:e2e';
  }) as typeof URL.createObjectURL;
  URL.revokeObjectURL = (() => {}) as typeof URL.revokeObjectURL;
  HTMLAnchorElement.prototype.click = function (this: HTMLAnchorElement) {
    downloads.push(lastBlob!);
  };

  mountApp(el('app'), {
    fetchFn: (input, init) => fetch(input, init),
    authUrl: authBase,
    voteUrl: relayBase,
  });

  // Step 1: fetch identities; a plain-http run presents no fingerprint.
  el<HTMLButtonElement>('fetch-identities').click();
  await waitFor(() => visible('identity-report'), 'identity report');
  expect(el('auth-presented').textContent).toBe('(none: plain-http run)');
  el<HTMLInputElement>('fpr-confirm').checked = true;
  el<HTMLInputElement>('fpr-confirm').dispatchEvent(new Event('change', { bubbles: true }));
  el<HTMLButtonElement>('connect-continue').click();

  // Step 2: authenticate with the printed credential bundle, then save.
  type('username', cred('username'));
  type('password', cred('password'));
  type('vote-token', cred('vote_token'));
  el<HTMLButtonElement>('authenticate').click();
  await waitFor(() => visible('authorization-view'), 'authorization view');
  const pin = el('pin-display').textContent ?? '';
  expect(pin).toMatch(/^\d{6}$/);

  el<HTMLButtonElement>('save-authorization').click();
  await waitFor(() => downloads.length === 1, 'saved authorization');
  expect(await blobText(downloads[0]!)).toContain('BEGIN VOTE AUTHORIZATION');

  // Step 3: cast through the relay and check the receipt against the vote.
  el<HTMLButtonElement>('to-cast').click();
  await waitFor(() => document.querySelectorAll('input[name="choice"]').length === 2, 'choices');
  expect(el('ballot-question').textContent).toBe('Adopt the new charter?');
  const radio = document.querySelector<HTMLInputElement>('input[name="choice"][value="yes"]');
  radio!.checked = true;
  type('cast-pin', pin);
  el<HTMLButtonElement>('cast').click();
  await waitFor(() => visible('receipt-view'), 'receipt view');

  expect(el('recompute-banner').textContent).toBe('code verified locally: match');
  expect(el('recompute-banner').className).toBe('match');
  const code = el('receipt-code').textContent ?? '';
  expect(code).toMatch(/^[0-9a-f]{64}$/);

  // Close the polls: stop the servers and run the post-election pipeline.
  await terminate(authServer);
  await terminate(voteServer);
  await terminate(relay);
  cli('unseal', '--ballot-root', root, '--service', 'all',
    '--token', tokens[0]!, '--token', tokens[1]!);
  cli('export-auth', '--ballot-root', root, '--purge-temp');
  cli('export-votes', '--ballot-root', root);
  cli('publish-tokens', '--ballot-root', root);
  cli('publish-codes', '--ballot-root', root);
  cli('tally', '--ballot-root', root, '--window-elapsed');

  const codesList = readFileSync(join(root, 'published', 'verification_codes.txt'), 'utf-8');
  expect(codesList).toContain(code);

  const lists = await serveDir(join(root, 'published'));
  listsServer = lists.server;

  // Step 4: the published checks in the same session.
  el<HTMLButtonElement>('to-check').click();
  expect(el<HTMLInputElement>('claimed-vote').value).toBe('yes');
  type('lists-url', `http://127.0.0.1:${lists.port}`);
  el<HTMLButtonElement>('run-checks').click();
  await waitFor(() => visible('check-report'), 'check report');

  const rows = [...document.querySelectorAll('#check-rows li')].map((li) => li.textContent ?? '');
  expect(rows).toHaveLength(4);
  for (const row of rows) {
    expect(row).toMatch(/: pass$/);
  }
  expect(el('check-verdict').textContent).toBe('all four checks pass');
}, 180_000);
