"""Acceptance gate: one test per system-level property, each printing a
single PASS/FAIL line. These drive the whole stack the way a real election
would, with independent recomputation wherever a number can be checked twice.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import os
import random
import struct
import sys
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import httpx
import pytest

from eballot.anonymizer import DEFAULT_STRIP_HEADERS, AnonymizingRelay, RelayConfig
from eballot.archive import read_archive
from eballot.ballot import ReissueMode
from eballot.credentials import (
    DEFAULT_KDF_ITERATIONS,
    TOKEN_CHARSET,
    canonical_json,
    compute_verification_code,
)
from eballot.envelope import (
    Envelope,
    Role,
    decrypt_verify,
    detached_sign,
    generate_identity,
    sign_encrypt,
    verify_detached,
)
from eballot.errors import (
    AuthorizationUsed,
    BadUnsealToken,
    EnvelopeError,
    FormatError,
    FrozenViolation,
    IntegrityAlarm,
    ServiceError,
    TokenUsed,
)
from eballot.officials import (
    PublishedLists,
    authmgr_audit,
    publish_used_tokens,
    publish_verification_codes,
    tally,
    verify_count,
    voter_verify,
)
from eballot.sealing import IntegrityManifest, SealController, SealState, verify_baseline
from eballot.vote_service import build_vote_app
from eballot.worm import WormStore


# conftest.py re-prints these after the run, outside pytest's capture.
VERDICTS: list[tuple[str, str]] = []


def report(criterion: str, failures: list[str]) -> None:
    """One always-visible verdict line per criterion."""
    verdict = "PASS" if not failures else "FAIL"
    VERDICTS.append((criterion, verdict))
    print(f"[acceptance] {criterion}: {verdict}", file=sys.__stdout__, flush=True)
    assert not failures, f"{criterion}: " + "; ".join(failures)


def authenticate(election, username, auth=None):
    bundle = election.credentials[username]
    auth = auth or election.auth_service()
    return auth.authenticate_and_issue(
        bundle["username"], bundle["password"], bundle["vote_token"]
    )


# --- 1. end-to-end honest election -----------------------------------------------


def test_end_to_end_honest_election(make_election):
    started = time.monotonic()
    failures: list[str] = []
    rng = random.Random(1001)
    roster = tuple(f"voter{i:03d}" for i in range(100))
    casters = roster[:90]
    election = make_election(
        roster=roster,
        reissue=ReissueMode.SERVER_STORE,
        pin_enabled=True,
        kdf_iterations=DEFAULT_KDF_ITERATIONS,
    )
    auth = election.auth_service()
    vote = election.vote_service()

    cast: dict[str, str] = {}
    receipts = {}
    for username in casters:
        bundle = election.credentials[username]
        issued = auth.authenticate_and_issue(
            bundle["username"], bundle["password"], bundle["vote_token"]
        )
        choice = rng.choice(("yes", "no"))
        cast[username] = choice
        receipts[username] = vote.cast_vote(issued.envelope, issued.pin, choice)

    counts = auth.counts()
    if counts["used_tokens"] != 90:
        failures.append(f"used tokens = {counts['used_tokens']}, wanted 90")
    if counts["issued_authorizations"] != 90:
        failures.append(
            f"issued authorizations = {counts['issued_authorizations']}, wanted 90"
        )
    vote_counts = vote.counts()
    if vote_counts != {"used_authorizations": 90, "votes": 90}:
        failures.append(f"vote-side counts = {vote_counts}")

    election.unseal_all()
    out = election.root / "archives"
    election.auth_service().export_auth_archive(out / "auth.tar")
    election.vote_service().export_vote_archives(
        out / "used_auths.tar", out / "votes.tar"
    )

    authmgr = election.identities[Role.AUTH_MGR.value]
    votemgr = election.identities[Role.VOTE_MGR.value]
    authsysmgr_public, authsysmgr_fpr = election.public_key(Role.AUTH_SYS_MGR)
    votesysmgr_public, votesysmgr_fpr = election.public_key(Role.VOTE_SYS_MGR)

    all_tokens = election.paths.issued_tokens_file.read_text().split()
    token_lists = publish_used_tokens(
        out / "auth.tar",
        authmgr,
        authsysmgr_public,
        authsysmgr_fpr,
        all_tokens,
        election.manifest.ballot_id,
    )
    if len(token_lists.used_tokens) != 90:
        failures.append(f"published used tokens = {len(token_lists.used_tokens)}")
    if len(token_lists.unused_tokens) != 10:
        failures.append(f"published unused tokens = {len(token_lists.unused_tokens)}")

    code_lists = publish_verification_codes(
        out / "votes.tar", election.manifest.ballot_id, votesysmgr_public
    )
    if len(code_lists.verification_codes) != 90:
        failures.append(f"published codes = {len(code_lists.verification_codes)}")

    result = tally(
        out / "votes.tar",
        votemgr,
        votesysmgr_fpr,
        election.manifest.ballot_id,
        votesysmgr_public=votesysmgr_public,
    )
    if not result.ok:
        failures.append(f"tally record failures: {result.record_failures}")
    independent_recount = dict(Counter(cast.values()))
    if result.lists.totals != independent_recount:
        failures.append(
            f"totals {result.lists.totals} != independent recount {independent_recount}"
        )
    if sum(result.lists.totals.values()) != 90:
        failures.append(f"totals sum to {sum(result.lists.totals.values())}")
    if not verify_count(result.lists):
        failures.append("published count does not re-verify")

    for username in casters:
        check = voter_verify(
            receipts[username], cast[username], result.lists, votesysmgr_public
        )
        if not (
            check.code_recomputed
            and check.signature_valid
            and check.code_published
            and check.final_row_matches is True
        ):
            failures.append(f"{username}: receipt checks {check}")
            break

    elapsed = time.monotonic() - started
    if elapsed >= 60:
        failures.append(f"took {elapsed:.1f}s, budget 60s")
    report("end-to-end honest election (100 voters, 90 cast)", failures)


# --- 2. one-time use under contention ---------------------------------------------


def test_one_time_use_under_contention(make_election):
    failures: list[str] = []
    roster = tuple(f"voter{i:03d}" for i in range(40))
    election = make_election(roster=roster, reissue=ReissueMode.NONE)
    auth = election.auth_service()
    vote = election.vote_service()
    attempts = 50
    # Tighten the interpreter's thread switch interval so 50 simultaneous
    # submissions genuinely interleave instead of running in 5 ms slices.
    previous_interval = sys.getswitchinterval()
    sys.setswitchinterval(0.0005)
    pool = ThreadPoolExecutor(max_workers=attempts)
    try:

        def contend(fn) -> tuple[int, int, int]:
            barrier = threading.Barrier(attempts)

            def attempt(_):
                barrier.wait()
                try:
                    fn()
                    return "ok"
                except (TokenUsed, AuthorizationUsed):
                    return "used"
                except ServiceError:
                    return "other"

            results = list(pool.map(attempt, range(attempts)))
            return results.count("ok"), results.count("used"), results.count("other")

        for username in roster[:20]:
            bundle = election.credentials[username]
            ok, used, other = contend(
                lambda b=bundle: auth.authenticate_and_issue(
                    b["username"], b["password"], b["vote_token"]
                )
            )
            if (ok, used, other) != (1, attempts - 1, 0):
                failures.append(
                    f"token {username}: {ok} ok / {used} used / {other} other"
                )

        issued = [authenticate(election, u, auth) for u in roster[20:]]
        for username, result in zip(roster[20:], issued):
            ok, used, other = contend(
                lambda r=result: vote.cast_vote(r.envelope, r.pin, "yes")
            )
            if (ok, used, other) != (1, attempts - 1, 0):
                failures.append(
                    f"authorization of {username}: {ok} ok / {used} used / {other} other"
                )
    finally:
        pool.shutdown(wait=True)
        sys.setswitchinterval(previous_interval)

    disk = {
        "used_tokens": WormStore(election.paths.used_tokens).count(),
        "issued": WormStore(election.paths.issued_authorizations).count(),
        "used_auths": WormStore(election.paths.used_authorizations).count(),
        "votes": WormStore(election.paths.votes).count(),
    }
    if disk != {"used_tokens": 40, "issued": 40, "used_auths": 20, "votes": 20}:
        failures.append(f"records on disk: {disk}")
    for directory in (
        election.paths.used_tokens,
        election.paths.issued_authorizations,
        election.paths.used_authorizations,
        election.paths.votes,
    ):
        names = WormStore(directory).list_names()
        if len(names) != len(set(names)):
            failures.append(f"duplicate files under {directory}")
    report("one-time use under 50-way contention (20 tokens, 20 authorizations)", failures)


# --- 3. unlinkability at rest -----------------------------------------------------


def test_unlinkability_at_rest(make_election):
    failures: list[str] = []
    rng = random.Random(3003)
    roster = tuple(f"voter{i:03d}" for i in range(12))
    casters, no_shows = roster[:10], roster[10:]
    election = make_election(roster=roster, reissue=ReissueMode.SERVER_STORE)
    auth = election.auth_service()
    vote = election.vote_service()
    receipts = {}
    for username in casters:
        issued = authenticate(election, username, auth)
        receipts[username] = vote.cast_vote(
            issued.envelope, issued.pin, rng.choice(("yes", "no"))
        )

    election.unseal_all()
    post_auth = election.auth_service()
    out = election.root / "archives"
    post_auth.export_auth_archive(out / "auth.tar")
    election.vote_service().export_vote_archives(
        out / "used_auths.tar", out / "votes.tar"
    )
    post_auth.purge_temp_authorizations()

    tokens = {election.credentials[u]["vote_token"].encode() for u in roster}
    codes = {r.verification_code.encode() for r in receipts.values()}
    auths = {
        n.encode()
        for n in WormStore(election.paths.used_authorizations).list_names()
    }
    usernames = {u.encode() for u in roster}

    authmgr = election.identities[Role.AUTH_MGR.value]
    votemgr = election.identities[Role.VOTE_MGR.value]
    _, authsysmgr_fpr = election.public_key(Role.AUTH_SYS_MGR)
    _, votesysmgr_fpr = election.public_key(Role.VOTE_SYS_MGR)
    recipient_by_dir = {
        election.paths.used_tokens: (authmgr, authsysmgr_fpr),
        election.paths.issued_authorizations: (authmgr, authsysmgr_fpr),
        election.paths.used_authorizations: (authmgr, votesysmgr_fpr),
        election.paths.votes: (votemgr, votesysmgr_fpr),
    }

    scanned = 0
    for dirpath, _, filenames in os.walk(election.root):
        for name in filenames:
            path = Path(dirpath) / name
            content = path.read_bytes()
            opener = recipient_by_dir.get(path.parent)
            if opener is not None and content:
                # Record files: scan what the intended recipient actually sees.
                content += decrypt_verify(Envelope.from_bytes(content), *opener)
            scanned += 1
            visible = content + b"\x00" + path.name.encode()
            has_token = any(t in visible for t in tokens)
            has_code = any(c in visible for c in codes)
            has_user = any(u in visible for u in usernames)
            has_auth = any(a in visible for a in auths)
            if has_token and has_code:
                failures.append(f"{path} links a vote token to a verification code")
            if has_user and has_code:
                failures.append(f"{path} links a username to a verification code")
            if has_user and has_auth:
                failures.append(f"{path} links a username to an authorization")
    if scanned < 40:
        failures.append(f"scan looks incomplete: only {scanned} files visited")
    if WormStore(election.paths.temp_authorizations, allow_purge=True).count():
        failures.append("temporary authorization copies survived the purge")

    for directory in recipient_by_dir:
        store = WormStore(directory)
        names = store.list_names()
        if names != sorted(names):
            failures.append(f"{directory} listing is not lexicographic")
        mtimes = {os.stat(directory / n).st_mtime for n in names}
        if len(mtimes) > 1:
            failures.append(f"{directory} mtimes leak arrival order: {mtimes}")
    report("unlinkability at rest after temp purge", failures)


# --- 4. tamper detection -----------------------------------------------------------


def test_tamper_detection_trials(make_election):
    failures: list[str] = []
    rng = random.Random(4004)
    roster = tuple(f"voter{i:03d}" for i in range(8))
    election = make_election(roster=roster)
    auth = election.auth_service()
    vote = election.vote_service()
    for username in roster[:6]:
        issued = authenticate(election, username, auth)
        vote.cast_vote(issued.envelope, issued.pin, rng.choice(("yes", "no")))
    election.unseal_all()
    out = election.root / "archives"
    election.auth_service().export_auth_archive(out / "auth.tar")

    paths = election.paths
    authmgr = election.identities[Role.AUTH_MGR.value]
    votemgr = election.identities[Role.VOTE_MGR.value]
    authsysmgr = election.identities[Role.AUTH_SYS_MGR.value]
    authsysmgr_public, authsysmgr_fpr = election.public_key(Role.AUTH_SYS_MGR)
    votesysmgr_public, votesysmgr_fpr = election.public_key(Role.VOTE_SYS_MGR)
    baseline_manifest = IntegrityManifest.load(paths.auth_state / "baseline.txt")
    guarded = sorted(baseline_manifest.entries)
    record_dirs = {
        paths.used_tokens: (authmgr, authsysmgr_fpr),
        paths.issued_authorizations: (authmgr, authsysmgr_fpr),
        paths.used_authorizations: (authmgr, votesysmgr_fpr),
        paths.votes: (votemgr, votesysmgr_fpr),
    }

    def trial_baseline_mutation() -> bool:
        victim = Path(rng.choice(guarded))
        original = victim.read_bytes()
        mutated = bytearray(original)
        pos = rng.randrange(len(mutated))
        mutated[pos] ^= 1 << rng.randrange(8)
        victim.write_bytes(bytes(mutated))
        try:
            found = verify_baseline(
                baseline_manifest,
                paths.baseline_roots(),
                authsysmgr_public,
                growth_dirs=paths.baseline_growth_dirs(),
                exclude=paths.baseline_exclude(),
            )
            return (
                list(found.modified) == [str(victim)]
                and not found.added
                and not found.removed
            )
        finally:
            victim.write_bytes(original)

    def trial_vote_rename() -> bool:
        store = WormStore(paths.votes)
        name = rng.choice(store.list_names())
        fake = "".join(rng.choice("0123456789abcdef") for _ in range(64))
        os.rename(paths.votes / name, paths.votes / fake)
        archive = out / "trial_votes.tar"
        try:
            election.vote_service().export_vote_archives(
                out / "trial_auths.tar", archive
            )
            try:
                tally(
                    archive,
                    votemgr,
                    votesysmgr_fpr,
                    election.manifest.ballot_id,
                    votesysmgr_public=votesysmgr_public,
                )
                return False
            except IntegrityAlarm:
                return True
        finally:
            os.rename(paths.votes / fake, paths.votes / name)

    def trial_ciphertext_flip() -> bool:
        directory = rng.choice(list(record_dirs))
        recipient, signer_fpr = record_dirs[directory]
        name = rng.choice(WormStore(directory).list_names())
        path = directory / name
        original = path.read_bytes()
        mutated = bytearray(original)
        pos = rng.randrange(len(mutated))
        mutated[pos] ^= 1 << rng.randrange(8)
        path.write_bytes(bytes(mutated))
        try:
            decrypt_verify(Envelope.from_bytes(bytes(mutated)), recipient, signer_fpr)
            return False
        except (EnvelopeError, FormatError):
            return True
        finally:
            path.write_bytes(original)

    def trial_signer_substitution() -> bool:
        store = WormStore(paths.used_authorizations)
        name = rng.choice(store.list_names())
        path = paths.used_authorizations / name
        original = path.read_bytes()
        authmgr_public, _ = election.public_key(Role.AUTH_MGR)
        forged = sign_encrypt(
            canonical_json(
                {"vote_authorization": name, "timestamp": "2026-01-01T00:00:00Z"}
            ).encode("utf-8"),
            authsysmgr,  # wrong official for this record type
            authmgr_public,
        )
        path.write_bytes(forged.to_bytes())
        try:
            election.vote_service().export_vote_archives(
                out / "trial_auths.tar", out / "trial_votes.tar"
            )
            audit = authmgr_audit(
                out / "auth.tar",
                out / "trial_auths.tar",
                authmgr,
                authsysmgr_public,
                authsysmgr_fpr,
                votesysmgr_public,
                votesysmgr_fpr,
            )
            return any(name in f for f in audit.signature_failures)
        finally:
            path.write_bytes(original)

    trials = [
        trial_baseline_mutation,
        trial_vote_rename,
        trial_ciphertext_flip,
        trial_signer_substitution,
    ] * 13
    rng.shuffle(trials)
    trials = trials[:50]
    detected = 0
    for i, trial in enumerate(trials):
        if trial():
            detected += 1
        else:
            failures.append(f"trial {i} ({trial.__name__}) went undetected")
    if detected != 50:
        failures.append(f"only {detected}/50 tampers detected")
    report("tamper detection across 50 randomized trials", failures)


# --- 5. receipt soundness -----------------------------------------------------------


def _oracle_code(vote: bytes, timestamp: str, random_string: str) -> str:
    """Independent recomputation: raw struct framing plus hashlib, sharing no
    code with the implementation under test."""
    ts = timestamp.encode("ascii")
    rs = random_string.encode("ascii")
    framed = (
        struct.pack(">I", len(vote))
        + vote
        + struct.pack(">I", len(ts))
        + ts
        + struct.pack(">I", len(rs))
        + rs
    )
    return hashlib.sha256(framed).hexdigest()


def test_receipt_soundness_against_oracle():
    failures: list[str] = []
    rng = random.Random(5005)
    signer = generate_identity(Role.VOTE_SYS_MGR)
    alphabet = "abcdefghij KLMNOP✓é0123456789-_."
    for i in range(1000):
        vote = "".join(
            rng.choice(alphabet) for _ in range(rng.randrange(0, 64))
        ).encode("utf-8")
        timestamp = (
            f"{rng.randrange(2000, 2100):04d}-{rng.randrange(1, 13):02d}-"
            f"{rng.randrange(1, 29):02d}T{rng.randrange(24):02d}:"
            f"{rng.randrange(60):02d}:{rng.randrange(60):02d}Z"
        )
        random_string = "".join(
            rng.choice(TOKEN_CHARSET) for _ in range(rng.randrange(0, 48))
        )
        code = compute_verification_code(vote, timestamp, random_string)
        if code != _oracle_code(vote, timestamp, random_string):
            failures.append(f"triple {i}: code disagrees with oracle")
            break
        signature = detached_sign(code.encode("ascii"), signer)
        if not verify_detached(code.encode("ascii"), signature, signer.public_key):
            failures.append(f"triple {i}: detached signature does not verify")
            break
    report("receipt soundness: 1000 triples vs independent oracle", failures)


# --- 6. anonymizer ------------------------------------------------------------------


def test_anonymizer_hides_voter_addresses(make_election, capsys, caplog):
    failures: list[str] = []
    roster = tuple(f"voter{i:03d}" for i in range(100))
    election = make_election(roster=roster)
    auth = election.auth_service()
    app = build_vote_app(election.vote_service())
    seen: list[dict] = []

    async def capturing_upstream(scope, receive, send):
        if scope["type"] == "http":
            seen.append(
                {
                    "client": scope.get("client"),
                    "headers": {
                        k.decode().lower(): v.decode() for k, v in scope["headers"]
                    },
                }
            )
        await app(scope, receive, send)

    relay_addr = ("192.0.2.250", 8442)
    relay = AnonymizingRelay(
        RelayConfig(upstream_base_url="http://vote-server"),
        client=httpx.AsyncClient(
            transport=httpx.ASGITransport(app=capturing_upstream, client=relay_addr),
            base_url="http://vote-server",
        ),
    )

    voter_addrs = [(f"198.51.100.{1 + i % 250}", 41000 + i) for i in range(100)]

    async def cast_all():
        for i, username in enumerate(roster):
            issued = authenticate(election, username, auth)
            async with httpx.AsyncClient(
                transport=httpx.ASGITransport(app=relay, client=voter_addrs[i]),
                base_url="http://relay",
            ) as voter:
                response = await voter.post(
                    "/v1/vote",
                    json={
                        "envelope": base64.b64encode(
                            issued.envelope.to_bytes()
                        ).decode("ascii"),
                        "choice": "yes",
                        "pin": issued.pin,
                    },
                    headers={
                        "user-agent": f"VoterBrowser/{i}",
                        "x-forwarded-for": voter_addrs[i][0],
                        "x-real-ip": voter_addrs[i][0],
                        "via": "1.1 voter-gateway",
                    },
                )
                if response.status_code != 200:
                    failures.append(f"cast {i} failed: {response.status_code}")
        await relay.aclose()

    asyncio.run(cast_all())

    if len(seen) != 100:
        failures.append(f"upstream observed {len(seen)} requests")
    stripped = set(DEFAULT_STRIP_HEADERS)
    for i, observation in enumerate(seen):
        if observation["client"] != relay_addr:
            failures.append(f"request {i}: upstream saw client {observation['client']}")
            break
        present = stripped & set(observation["headers"])
        if present:
            failures.append(f"request {i}: stripped headers leaked: {present}")
            break
        header_blob = json.dumps(observation["headers"])
        if any(addr in header_blob for addr, _ in voter_addrs):
            failures.append(f"request {i}: voter address appears in headers")
            break

    log_output = caplog.text + capsys.readouterr().err
    if any(addr in log_output for addr, _ in voter_addrs):
        failures.append("a voter address appears in log output")
    report("anonymizer: 100 relayed casts expose only the relay address", failures)


# --- 7. seal state machine -----------------------------------------------------------


def test_seal_state_machine_transition_table(tmp_path):
    failures: list[str] = []
    states = (SealState.SOFTMODE, SealState.ENFORCING, SealState.FROZEN)
    token = "acceptance-unseal-token-0123456789"
    case = 0
    for src in states:
        for dst in states:
            for restarted in (False, True):
                for supplied in ("correct", "wrong", "missing"):
                    case += 1
                    state_dir = tmp_path / f"case{case}"
                    setup = SealController(state_dir)
                    if src is SealState.ENFORCING:
                        setup.set_state(SealState.ENFORCING)
                    elif src is SealState.FROZEN:
                        setup.set_state(SealState.FROZEN, unseal_token=token)
                    controller = SealController(state_dir, restarted=restarted)
                    unseal_token = {
                        "correct": token,
                        "wrong": "not-the-token-abcdefghijklmnopqr",
                        "missing": None,
                    }[supplied]
                    leaving_frozen = src is SealState.FROZEN and dst is not SealState.FROZEN
                    if not leaving_frozen:
                        expected = "ok"
                    elif not restarted:
                        expected = "frozen_violation"
                    elif supplied == "correct":
                        expected = "ok"
                    else:
                        expected = "bad_token"
                    try:
                        controller.set_state(dst, unseal_token=unseal_token)
                        outcome = "ok"
                        final = controller.state
                    except FrozenViolation:
                        outcome = "frozen_violation"
                        final = controller.state
                    except BadUnsealToken:
                        outcome = "bad_token"
                        final = controller.state
                    if outcome != expected:
                        failures.append(
                            f"{src.value}->{dst.value} restarted={restarted} "
                            f"token={supplied}: got {outcome}, wanted {expected}"
                        )
                    if outcome == "ok" and final is not dst:
                        failures.append(
                            f"{src.value}->{dst.value}: state ended as {final}"
                        )
                    if outcome != "ok" and final is not src:
                        failures.append(
                            f"{src.value}->{dst.value}: rejected transition moved "
                            f"state to {final}"
                        )
    report("seal state machine: all transition pairs behave per the table", failures)
