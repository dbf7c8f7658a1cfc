"""Produce the browser test fixtures by running one tiny election.

Outputs under frontend/tests/fixtures/:
  receipt.json            a genuine receipt plus the vote it belongs to
  tampered_receipt.json   same receipt with one code digit altered
  published/              the published list files and server public key
  published_tampered/     copy with the receipt's final-list row flipped

Run from the repository root after installing the package:
  python3 frontend/scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import shutil
import sys
import tempfile
from pathlib import Path

from eballot.auth_service import AuthService
from eballot.ballot import (
    BallotConfig,
    BallotDefinition,
    BallotPaths,
    ReissueMode,
    setup_ballot,
)
from eballot.cli import main as cli
from eballot.envelope import Role
from eballot.sealing import SealController, SealState, baseline
from eballot.vote_service import VoteService

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def run(root: Path) -> None:
    definition = BallotDefinition(
        ballot_id="fixture-2026",
        question="Accept the proposal?",
        choices=("yes", "no"),
        allow_write_in=False,
    )
    config = BallotConfig(
        reissue_mode=ReissueMode.SERVER_STORE,
        pin_enabled=True,
        kdf_iterations=2_000,
    )
    setup_ballot(root, ["alice", "bob", "carol"], definition, config, with_tls=False)
    paths = BallotPaths(root)

    tokens = {}
    for service, role in (("auth", Role.AUTH_SYS_MGR), ("vote", Role.VOTE_SYS_MGR)):
        state_dir = paths.auth_state if service == "auth" else paths.vote_state
        rules = (
            paths.auth_guard_rules() if service == "auth" else paths.vote_guard_rules()
        )
        from eballot.envelope import PassphraseMode, load_identity

        signer = load_identity(paths.keys_dir(role), role, PassphraseMode.FILE)
        manifest = baseline(
            paths.baseline_roots(), signer, exclude=paths.baseline_exclude()
        )
        manifest.save(state_dir / "baseline.txt")
        tokens[service] = SealController(state_dir, rules=rules).seal()

    def bundle(username: str) -> dict[str, str]:
        lines = (paths.credentials_dir / f"{username}.txt").read_text().splitlines()
        return dict(line.split(": ", 1) for line in lines if ": " in line)

    auth = AuthService(root)
    vote = VoteService(root)
    receipts = {}
    for username, choice in (("alice", "yes"), ("bob", "no")):
        creds = bundle(username)
        grant = auth.authenticate_and_issue(
            creds["username"], creds["password"], creds["vote_token"]
        )
        receipts[username] = (choice, vote.cast_vote(grant.envelope, grant.pin, choice))

    for service in ("auth", "vote"):
        state_dir = paths.auth_state if service == "auth" else paths.vote_state
        rules = (
            paths.auth_guard_rules() if service == "auth" else paths.vote_guard_rules()
        )
        controller = SealController(state_dir, rules=rules, restarted=True)
        controller.set_state(SealState.SOFTMODE, unseal_token=tokens[service])

    for argv in (
        ["export-auth", "--ballot-root", str(root), "--purge-temp"],
        ["export-votes", "--ballot-root", str(root)],
        ["publish-tokens", "--ballot-root", str(root)],
        ["publish-codes", "--ballot-root", str(root)],
        ["tally", "--ballot-root", str(root), "--window-elapsed"],
    ):
        code = cli(argv)
        if code != 0:
            raise SystemExit(f"{argv[0]} failed with {code}")

    # --- write fixtures ---------------------------------------------------

    FIXTURES.mkdir(parents=True, exist_ok=True)
    for name in ("published", "published_tampered"):
        target = FIXTURES / name
        if target.exists():
            shutil.rmtree(target)
        shutil.copytree(paths.published_dir, target)

    choice, receipt = receipts["alice"]
    receipt_doc = {"vote": choice, "receipt": receipt.to_dict()}
    (FIXTURES / "receipt.json").write_text(json.dumps(receipt_doc, indent=2) + "\n")

    code = receipt.verification_code
    flipped = ("0" if code[0] != "0" else "1") + code[1:]
    tampered = json.loads(json.dumps(receipt_doc))
    tampered["receipt"]["verification_code"] = flipped
    (FIXTURES / "tampered_receipt.json").write_text(
        json.dumps(tampered, indent=2) + "\n"
    )

    final_path = FIXTURES / "published_tampered" / "final_votes.txt"
    rows = final_path.read_text().splitlines()
    wrong = "no" if choice == "yes" else "yes"
    rows = [
        f"{code}\t{wrong}" if row.startswith(f"{code}\t") else row for row in rows
    ]
    final_path.write_text("\n".join(rows) + "\n")

    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        run(Path(tmp) / "ballot")
    sys.exit(0)
