"""Command-line tooling for the five official roles and for voters.

Every verb takes --ballot-root and exits 0 only when all of its checks pass.
The servers are started with access logging disabled: request logs would
record client addresses, which this system must never persist.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .ballot import (
    BallotConfig,
    BallotDefinition,
    BallotManifest,
    BallotPaths,
    ReissueMode,
    TokenBinding,
    setup_ballot,
)
from .envelope import Role, load_identity, load_public_key
from .errors import EballotError
from .officials import (
    PublishedLists,
    authmgr_audit,
    publish_used_tokens,
    publish_verification_codes,
    tally,
    verify_count,
    voter_verify,
)
from .sealing import IntegrityManifest, SealController, SealState, baseline, verify_baseline
from .vote_service import VoteReceipt

_SERVICE_ROLES = {"auth": Role.AUTH_SYS_MGR, "vote": Role.VOTE_SYS_MGR}


def _paths(args) -> BallotPaths:
    return BallotPaths(Path(args.ballot_root))


def _state_dir(paths: BallotPaths, service: str) -> Path:
    return paths.auth_state if service == "auth" else paths.vote_state


def _rules(paths: BallotPaths, service: str):
    return paths.auth_guard_rules() if service == "auth" else paths.vote_guard_rules()


# --- setup ---------------------------------------------------------------------


def cmd_setup_ballot(args) -> int:
    roster = [
        line.strip()
        for line in Path(args.roster).read_text().splitlines()
        if line.strip()
    ]
    definition = BallotDefinition(
        ballot_id=args.ballot_id,
        question=args.question,
        choices=tuple(args.choice),
        allow_write_in=args.allow_write_in,
    )
    config = BallotConfig(
        token_binding=TokenBinding(args.binding),
        reissue_mode=ReissueMode(args.reissue),
        pin_enabled=not args.no_pin,
        token_length=args.token_length,
    )
    manifest, _ = setup_ballot(
        Path(args.ballot_root), roster, definition, config, with_tls=not args.no_tls
    )
    print(f"ballot {manifest.ballot_id}: {len(roster)} voter bundles written")
    for role, fpr in sorted(manifest.manager_fingerprints.items()):
        print(f"  {role}: {fpr}")
    for side, fpr in sorted(manifest.tls_fingerprints.items()):
        print(f"  tls/{side}: {fpr}")
    return 0


# --- sealing -------------------------------------------------------------------


def _seal_one(paths: BallotPaths, service: str) -> None:
    role = _SERVICE_ROLES[service]
    identity = load_identity(paths.keys_dir(role), role)
    manifest = baseline(
        paths.baseline_roots(), identity, exclude=paths.baseline_exclude()
    )
    state_dir = _state_dir(paths, service)
    manifest.save(state_dir / "baseline.txt")
    controller = SealController(state_dir, rules=_rules(paths, service))
    token = controller.seal()
    print(f"{service} server sealed (frozen). UNSEAL TOKEN (shown once): {token}")


def cmd_seal(args) -> int:
    paths = _paths(args)
    services = ("auth", "vote") if args.service == "all" else (args.service,)
    for service in services:
        _seal_one(paths, service)
    return 0


def cmd_unseal(args) -> int:
    paths = _paths(args)
    services = ("auth", "vote") if args.service == "all" else (args.service,)
    tokens = args.token
    if len(tokens) != len(services):
        print(f"need {len(services)} --token value(s), got {len(tokens)}")
        return 2
    ok = True
    for service, token in zip(services, tokens):
        role = _SERVICE_ROLES[service]
        state_dir = _state_dir(paths, service)
        controller = SealController(
            state_dir, rules=_rules(paths, service), restarted=True
        )
        controller.set_state(SealState.SOFTMODE, unseal_token=token)
        print(f"{service} server unsealed (softmode)")
        manifest_path = state_dir / "baseline.txt"
        if not manifest_path.exists():
            print(f"{service}: no baseline recorded at seal time")
            ok = False
            continue
        manifest = IntegrityManifest.load(manifest_path)
        public, _ = load_public_key(paths.public_key_file(role))
        report = verify_baseline(
            manifest,
            paths.baseline_roots(),
            public,
            growth_dirs=paths.baseline_growth_dirs(),
            exclude=paths.baseline_exclude(),
        )
        for kind, items in (
            ("added", report.added),
            ("removed", report.removed),
            ("modified", report.modified),
        ):
            for item in items:
                print(f"{service}: {kind}: {item}")
                ok = False
        if report.ok:
            print(f"{service}: integrity verified, no unexpected changes")
    return 0 if ok else 1


# --- archive exchange ----------------------------------------------------------


def cmd_export_auth(args) -> int:
    from .auth_service import AuthService

    paths = _paths(args)
    service = AuthService(paths.root)
    output = Path(args.output or paths.archives_dir / "auth_records.tar")
    archive_digest = service.export_auth_archive(output)
    if args.purge_temp:
        removed = service.purge_temp_authorizations()
        print(f"purged {removed} temporary authorization copies")
    print(f"wrote {output} ({archive_digest})")
    return 0


def cmd_export_votes(args) -> int:
    from .vote_service import VoteService

    paths = _paths(args)
    service = VoteService(paths.root)
    out_auth = Path(args.output_auth or paths.archives_dir / "used_auth_records.tar")
    out_votes = Path(args.output_votes or paths.archives_dir / "vote_records.tar")
    d1, d2 = service.export_vote_archives(out_auth, out_votes)
    print(f"wrote {out_auth} ({d1})")
    print(f"wrote {out_votes} ({d2})")
    return 0


# --- audit / publication / tally -------------------------------------------------


def _load_official(paths: BallotPaths, role: Role):
    return load_identity(paths.keys_dir(role), role)


def cmd_audit(args) -> int:
    paths = _paths(args)
    authmgr = _load_official(paths, Role.AUTH_MGR)
    authsys_pub, authsys_fpr = load_public_key(
        paths.public_key_file(Role.AUTH_SYS_MGR)
    )
    votesys_pub, votesys_fpr = load_public_key(
        paths.public_key_file(Role.VOTE_SYS_MGR)
    )
    report = authmgr_audit(
        Path(args.auth_archive or paths.archives_dir / "auth_records.tar"),
        Path(args.used_auth_archive or paths.archives_dir / "used_auth_records.tar"),
        authmgr,
        authsys_pub,
        authsys_fpr,
        votesys_pub,
        votesys_fpr,
    )
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def cmd_publish_tokens(args) -> int:
    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    authmgr = _load_official(paths, Role.AUTH_MGR)
    authsys_pub, authsys_fpr = load_public_key(
        paths.public_key_file(Role.AUTH_SYS_MGR)
    )
    all_tokens = [
        line.strip()
        for line in paths.issued_tokens_file.read_text().splitlines()
        if line.strip()
    ]
    lists = publish_used_tokens(
        Path(args.auth_archive or paths.archives_dir / "auth_records.tar"),
        authmgr,
        authsys_pub,
        authsys_fpr,
        all_tokens,
        manifest.ballot_id,
    )
    written = lists.write_dir(Path(args.published or paths.published_dir), ("tokens",))
    print(
        f"published {len(lists.used_tokens)} used and "
        f"{len(lists.unused_tokens)} unused tokens"
    )
    for path in written:
        print(f"  {path}")
    return 0


def cmd_publish_codes(args) -> int:
    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    votesys_pub, _ = load_public_key(paths.public_key_file(Role.VOTE_SYS_MGR))
    lists = publish_verification_codes(
        Path(args.votes_archive or paths.archives_dir / "vote_records.tar"),
        manifest.ballot_id,
        votesysmgr_public=votesys_pub,
    )
    published_dir = Path(args.published or paths.published_dir)
    written = lists.write_dir(published_dir, ("codes",))
    # Voters verify their receipt signatures against this key.
    shutil.copyfile(
        paths.public_key_file(Role.VOTE_SYS_MGR),
        published_dir / "votesysmgr_public.pem",
    )
    print(f"published {len(lists.verification_codes)} verification codes")
    for path in written:
        print(f"  {path}")
    print(f"  {published_dir / 'votesysmgr_public.pem'}")
    return 0


def cmd_tally(args) -> int:
    if not args.window_elapsed:
        print(
            "refusing to tally: pass --window-elapsed once voters have had "
            "time to check the published codes"
        )
        return 2
    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    votemgr = _load_official(paths, Role.VOTE_MGR)
    votesys_pub, votesys_fpr = load_public_key(
        paths.public_key_file(Role.VOTE_SYS_MGR)
    )
    result = tally(
        Path(args.votes_archive or paths.archives_dir / "vote_records.tar"),
        votemgr,
        votesys_fpr,
        manifest.ballot_id,
        votesysmgr_public=votesys_pub,
    )
    result.lists.write_dir(Path(args.published or paths.published_dir), ("final",))
    for choice, count in sorted(result.lists.totals.items()):
        print(f"{choice}\t{count}")
    print(f"total votes: {len(result.lists.final_votes)}")
    for failure in result.record_failures:
        print(f"RECORD FAILURE: {failure}")
    return 0 if result.ok else 1


# --- voter-side ------------------------------------------------------------------


def cmd_voter_verify(args) -> int:
    paths = _paths(args)
    receipt = VoteReceipt.from_dict(json.loads(Path(args.receipt).read_text()))
    published_dir = Path(args.published or paths.published_dir)
    published = PublishedLists.load_dir(published_dir)
    key_path = Path(args.server_key) if args.server_key else (
        published_dir / "votesysmgr_public.pem"
    )
    if not key_path.exists():
        key_path = paths.public_key_file(Role.VOTE_SYS_MGR)
    public, _ = load_public_key(key_path)
    report = voter_verify(receipt, args.vote, published, public)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def cmd_verify_count(args) -> int:
    paths = _paths(args)
    published = PublishedLists.load_dir(Path(args.published or paths.published_dir))
    if not published.final_votes and not published.totals:
        print("final list not published yet")
        return 1
    ok = verify_count(published)
    print("count verifies" if ok else "count DOES NOT verify")
    return 0 if ok else 1


# --- servers ---------------------------------------------------------------------


def _uvicorn_tls_kwargs(paths: BallotPaths, name: str, enabled: bool) -> dict:
    if not enabled:
        return {}
    return {
        "ssl_certfile": str(paths.tls_dir / f"{name}.cert.pem"),
        "ssl_keyfile": str(paths.tls_dir / f"{name}.key.pem"),
    }


def cmd_serve_auth(args) -> int:
    import uvicorn

    from .auth_service import AuthService, build_auth_app

    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    service = AuthService(paths.root)
    uvicorn.run(
        build_auth_app(service),
        host=args.host,
        port=args.port or manifest.config.auth_port,
        access_log=False,
        log_level="warning",
        **_uvicorn_tls_kwargs(paths, "auth", args.tls),
    )
    return 0


def cmd_serve_vote(args) -> int:
    import uvicorn

    from .vote_service import VoteService, build_vote_app

    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    service = VoteService(paths.root)
    uvicorn.run(
        build_vote_app(service),
        host=args.host,
        port=args.port or manifest.config.vote_port,
        access_log=False,
        log_level="warning",
        **_uvicorn_tls_kwargs(paths, "vote", args.tls),
    )
    return 0


def cmd_serve_anon(args) -> int:
    import uvicorn

    from .anonymizer import AnonymizingRelay, RelayConfig

    paths = _paths(args)
    manifest = BallotManifest.load(paths.manifest)
    upstream = args.upstream or f"http://127.0.0.1:{manifest.config.vote_port}"
    config = RelayConfig(
        upstream_base_url=upstream,
        listen_host=args.host,
        listen_port=args.port or manifest.config.anon_port,
    )
    uvicorn.run(
        AnonymizingRelay(config),
        host=config.listen_host,
        port=config.listen_port,
        access_log=False,
        log_level="warning",
    )
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eballot", description="one-time-token ballot system tooling"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--ballot-root", required=True)
        p.set_defaults(fn=fn)
        return p

    p = add("setup-ballot", cmd_setup_ballot, "create keys, credentials, directories")
    p.add_argument("--roster", required=True, help="file with one username per line")
    p.add_argument("--ballot-id", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--choice", action="append", required=True)
    p.add_argument("--allow-write-in", action="store_true")
    p.add_argument("--no-pin", action="store_true")
    p.add_argument(
        "--binding",
        choices=[b.value for b in TokenBinding],
        default=TokenBinding.INDEPENDENT.value,
    )
    p.add_argument(
        "--reissue",
        choices=[m.value for m in ReissueMode],
        default=ReissueMode.NONE.value,
    )
    p.add_argument("--token-length", type=int, default=32)
    p.add_argument("--no-tls", action="store_true")

    p = add("seal", cmd_seal, "baseline the tree and freeze a server")
    p.add_argument("--service", choices=["auth", "vote", "all"], default="all")

    p = add("unseal", cmd_unseal, "restart out of frozen and verify integrity")
    p.add_argument("--service", choices=["auth", "vote", "all"], default="all")
    p.add_argument("--token", action="append", required=True)

    p = add("export-auth", cmd_export_auth, "archive token/authorization records")
    p.add_argument("--output")
    p.add_argument("--purge-temp", action="store_true")

    p = add("export-votes", cmd_export_votes, "archive used-authorization and vote records")
    p.add_argument("--output-auth")
    p.add_argument("--output-votes")

    p = add("audit", cmd_audit, "cross-check both archives as the ballot organizer")
    p.add_argument("--auth-archive")
    p.add_argument("--used-auth-archive")

    p = add("publish-tokens", cmd_publish_tokens, "publish used/unused token lists")
    p.add_argument("--auth-archive")
    p.add_argument("--published")

    p = add("publish-codes", cmd_publish_codes, "publish verification codes")
    p.add_argument("--votes-archive")
    p.add_argument("--published")

    p = add("tally", cmd_tally, "decrypt, verify and count the votes")
    p.add_argument("--votes-archive")
    p.add_argument("--published")
    p.add_argument("--window-elapsed", action="store_true")

    p = add("voter-verify", cmd_voter_verify, "run the voter's four receipt checks")
    p.add_argument("--receipt", required=True, help="receipt JSON file")
    p.add_argument("--vote", required=True)
    p.add_argument("--published")
    p.add_argument("--server-key")

    p = add("verify-count", cmd_verify_count, "recount the published final list")
    p.add_argument("--published")

    for name, fn, help_ in (
        ("serve-auth", cmd_serve_auth, "run the authentication server"),
        ("serve-vote", cmd_serve_vote, "run the vote server"),
        ("serve-anon", cmd_serve_anon, "run the anonymizing relay"),
    ):
        p = add(name, fn, help_)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int)
        if name == "serve-anon":
            p.add_argument("--upstream")
        else:
            p.add_argument("--tls", action="store_true")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except EballotError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
