"""Official-side operations: archive audit, publication, tally, and the
voter's own receipt checks.

Published lists are newline-delimited sorted text with a header naming the
ballot, so repeated publication of the same archives is byte-identical and
diffable. The tally decrypts each vote record exactly once, verifies the
vote server's signature, and treats a filename/embedded-code mismatch as a
hard integrity alarm rather than a countable error.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import rsa

from .archive import read_archive
from .credentials import compute_verification_code, is_rfc3339_utc
from .envelope import (
    Envelope,
    ManagerIdentity,
    decrypt_verify,
    verify_detached,
)
from .errors import EballotError, FormatError, IntegrityAlarm
from .vote_service import VoteReceipt

_HEX_CODE_LEN = 64


# --- published artifacts --------------------------------------------------------


@dataclass
class PublishedLists:
    """Everything the officials make public, in publication order."""

    ballot_id: str
    used_tokens: list[tuple[str, str, str]] = field(default_factory=list)
    unused_tokens: list[str] = field(default_factory=list)
    verification_codes: list[str] = field(default_factory=list)
    final_votes: list[tuple[str, str]] = field(default_factory=list)
    totals: dict[str, int] = field(default_factory=dict)

    def _header(self) -> str:
        return f"# ballot_id: {self.ballot_id}\n"

    def write_dir(
        self, out_dir: Path, parts: tuple[str, ...] = ("tokens", "codes", "final")
    ) -> list[Path]:
        """Write the selected lists; `parts` lets each official publish only
        what they hold without clobbering the others' files."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []

        def emit(name: str, rows: list[str]) -> None:
            path = out_dir / name
            path.write_text(self._header() + "".join(r + "\n" for r in rows))
            written.append(path)

        if "tokens" in parts:
            emit(
                "used_tokens.txt",
                [f"{t}\t{u}\t{ts}" for t, u, ts in sorted(self.used_tokens)],
            )
            emit("unused_tokens.txt", sorted(self.unused_tokens))
        if "codes" in parts:
            emit("verification_codes.txt", sorted(self.verification_codes))
        if "final" in parts:
            emit("final_votes.txt", [f"{c}\t{v}" for c, v in sorted(self.final_votes)])
            emit(
                "totals.txt",
                [f"{choice}\t{n}" for choice, n in sorted(self.totals.items())],
            )
        return written

    @classmethod
    def load_dir(cls, out_dir: Path) -> "PublishedLists":
        out_dir = Path(out_dir)
        ballot_id = ""

        def rows(name: str) -> list[str]:
            nonlocal ballot_id
            path = out_dir / name
            if not path.exists():
                return []
            out = []
            for line in path.read_text().splitlines():
                if line.startswith("# ballot_id: "):
                    ballot_id = line.split(": ", 1)[1]
                elif line.strip():
                    out.append(line)
            return out

        used = [tuple(r.split("\t")) for r in rows("used_tokens.txt")]
        if any(len(r) != 3 for r in used):
            raise FormatError("used_tokens.txt rows must be token/username/timestamp")
        final = [tuple(r.split("\t", 1)) for r in rows("final_votes.txt")]
        totals = {}
        for r in rows("totals.txt"):
            choice, _, n = r.rpartition("\t")
            totals[choice] = int(n)
        return cls(
            ballot_id=ballot_id,
            used_tokens=[(t, u, ts) for t, u, ts in used],
            unused_tokens=rows("unused_tokens.txt"),
            verification_codes=rows("verification_codes.txt"),
            final_votes=[(c, v) for c, v in final],
            totals=totals,
        )


# --- audit ----------------------------------------------------------------------


@dataclass
class AuditReport:
    used_token_count: int = 0
    issued_authorization_count: int = 0
    used_authorization_count: int = 0
    abstained_count: int = 0
    signature_failures: list[str] = field(default_factory=list)
    consistency_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.signature_failures or self.consistency_failures)

    def lines(self) -> list[str]:
        out = [
            f"used tokens:            {self.used_token_count}",
            f"issued authorizations:  {self.issued_authorization_count}",
            f"used authorizations:    {self.used_authorization_count}",
            f"abstained (authorized, never cast): {self.abstained_count}",
        ]
        for f_ in self.signature_failures:
            out.append(f"SIGNATURE FAILURE: {f_}")
        for f_ in self.consistency_failures:
            out.append(f"INCONSISTENCY: {f_}")
        out.append("audit: PASS" if self.ok else "audit: FAIL")
        return out


def _decrypt_records(
    records: dict[str, bytes],
    recipient: ManagerIdentity,
    expected_signer_fpr: str,
    prefix: str,
    failures: list[str],
) -> dict[str, dict]:
    opened: dict[str, dict] = {}
    for name, blob in sorted(records.items()):
        try:
            env = Envelope.from_bytes(blob)
            payload = decrypt_verify(env, recipient, expected_signer_fpr)
            opened[name] = json.loads(payload.decode("utf-8"))
        except (EballotError, ValueError) as e:
            failures.append(f"{prefix}/{name}: {e}")
    return opened


def authmgr_audit(
    auth_archive_path: Path,
    used_auth_archive_path: Path,
    authmgr: ManagerIdentity,
    authsysmgr_public: rsa.RSAPublicKey,
    authsysmgr_fpr: str,
    votesysmgr_public: rsa.RSAPublicKey,
    votesysmgr_fpr: str,
) -> AuditReport:
    """Cross-check the two record archives: every record decrypts for the
    organizer, carries the right signer, matches its filename, and the
    counts line up. Per-record failures are reported, not thrown."""
    report = AuditReport()
    auth_archive = read_archive(auth_archive_path, signer_public=authsysmgr_public)
    used_auth_archive = read_archive(
        used_auth_archive_path, signer_public=votesysmgr_public
    )
    used_tokens = _decrypt_records(
        auth_archive.get("used_tokens", {}),
        authmgr,
        authsysmgr_fpr,
        "used_tokens",
        report.signature_failures,
    )
    issued = _decrypt_records(
        auth_archive.get("issued_authorizations", {}),
        authmgr,
        authsysmgr_fpr,
        "issued_authorizations",
        report.signature_failures,
    )
    used_auths = _decrypt_records(
        used_auth_archive.get("used_authorizations", {}),
        authmgr,
        votesysmgr_fpr,
        "used_authorizations",
        report.signature_failures,
    )

    for name, fields in used_tokens.items():
        if fields.get("vote_token") != name:
            report.consistency_failures.append(
                f"used_tokens/{name}: embedded token differs from filename"
            )
        if not is_rfc3339_utc(fields.get("timestamp", "")):
            report.consistency_failures.append(
                f"used_tokens/{name}: bad timestamp"
            )
    issued_values = set()
    for name, fields in issued.items():
        value = fields.get("vote_authorization")
        issued_values.add(value)
        if value != name:
            report.consistency_failures.append(
                f"issued_authorizations/{name}: embedded value differs from filename"
            )
    for name, fields in used_auths.items():
        value = fields.get("vote_authorization")
        if value != name:
            report.consistency_failures.append(
                f"used_authorizations/{name}: embedded value differs from filename"
            )
        if value not in issued_values:
            report.consistency_failures.append(
                f"used_authorizations/{name}: authorization was never issued"
            )

    report.used_token_count = len(auth_archive.get("used_tokens", {}))
    report.issued_authorization_count = len(
        auth_archive.get("issued_authorizations", {})
    )
    report.used_authorization_count = len(
        used_auth_archive.get("used_authorizations", {})
    )
    if report.used_token_count != report.issued_authorization_count:
        report.consistency_failures.append(
            f"|used tokens| = {report.used_token_count} but "
            f"|issued authorizations| = {report.issued_authorization_count}"
        )
    if report.used_authorization_count > report.issued_authorization_count:
        report.consistency_failures.append(
            "more authorizations used than were ever issued"
        )
    report.abstained_count = max(
        report.issued_authorization_count - report.used_authorization_count, 0
    )
    return report


# --- publication ----------------------------------------------------------------


def publish_used_tokens(
    auth_archive_path: Path,
    authmgr: ManagerIdentity,
    authsysmgr_public: rsa.RSAPublicKey,
    authsysmgr_fpr: str,
    all_tokens: list[str],
    ballot_id: str,
) -> PublishedLists:
    """Build the used-token rows (token, username, timestamp) and the unused
    remainder of the full issued-token list."""
    failures: list[str] = []
    auth_archive = read_archive(auth_archive_path, signer_public=authsysmgr_public)
    used = _decrypt_records(
        auth_archive.get("used_tokens", {}),
        authmgr,
        authsysmgr_fpr,
        "used_tokens",
        failures,
    )
    if failures:
        raise IntegrityAlarm(
            "cannot publish from an archive with undecryptable records: "
            + "; ".join(failures)
        )
    rows = [
        (fields["vote_token"], fields["username"], fields["timestamp"])
        for fields in used.values()
    ]
    used_set = {t for t, _, _ in rows}
    unused = sorted(set(all_tokens) - used_set)
    return PublishedLists(
        ballot_id=ballot_id, used_tokens=sorted(rows), unused_tokens=unused
    )


def publish_verification_codes(
    votes_archive_path: Path,
    ballot_id: str,
    votesysmgr_public: rsa.RSAPublicKey | None = None,
) -> PublishedLists:
    """List the verification codes straight from the vote record filenames;
    the votes themselves are never decrypted here."""
    archive = read_archive(votes_archive_path, signer_public=votesysmgr_public)
    codes = sorted(archive.get("votes", {}).keys())
    for code in codes:
        if len(code) != _HEX_CODE_LEN or any(c not in "0123456789abcdef" for c in code):
            raise FormatError(f"vote record name is not a hex code: {code!r}")
    return PublishedLists(ballot_id=ballot_id, verification_codes=codes)


@dataclass
class TallyResult:
    lists: PublishedLists
    record_failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.record_failures


def tally(
    votes_archive_path: Path,
    votemgr: ManagerIdentity,
    votesysmgr_fpr: str,
    ballot_id: str,
    votesysmgr_public: rsa.RSAPublicKey | None = None,
) -> TallyResult:
    """Decrypt every vote record, verify its signature and its filename
    binding, and count. A filename/embedded-code mismatch aborts loudly."""
    archive = read_archive(votes_archive_path, signer_public=votesysmgr_public)
    failures: list[str] = []
    opened = _decrypt_records(
        archive.get("votes", {}), votemgr, votesysmgr_fpr, "votes", failures
    )
    final: list[tuple[str, str]] = []
    totals: Counter = Counter()
    for name, fields in sorted(opened.items()):
        embedded = fields.get("verification_code")
        if embedded != name:
            raise IntegrityAlarm(
                f"vote record {name} embeds code {embedded}: "
                "storage names were altered"
            )
        vote = fields.get("vote")
        if not isinstance(vote, str):
            failures.append(f"votes/{name}: malformed vote payload")
            continue
        final.append((name, vote))
        totals[vote] += 1
    lists = PublishedLists(
        ballot_id=ballot_id,
        verification_codes=[name for name in sorted(archive.get("votes", {}))],
        final_votes=final,
        totals=dict(totals),
    )
    return TallyResult(lists=lists, record_failures=failures)


# --- voter-side verification ----------------------------------------------------


@dataclass
class VerifyReport:
    code_recomputed: bool
    signature_valid: bool
    code_published: bool
    final_row_matches: bool | None  # None until the final list is published

    @property
    def ok(self) -> bool:
        return (
            self.code_recomputed
            and self.signature_valid
            and self.code_published
            and self.final_row_matches is not False
        )

    def lines(self) -> list[str]:
        def mark(value: bool | None) -> str:
            return "pass" if value else ("n/a" if value is None else "FAIL")

        return [
            f"code recomputes from vote/timestamp/random: {mark(self.code_recomputed)}",
            f"receipt signature verifies:                 {mark(self.signature_valid)}",
            f"code appears in published list:             {mark(self.code_published)}",
            f"final list row matches vote:                {mark(self.final_row_matches)}",
        ]


def voter_verify(
    receipt: VoteReceipt,
    vote: str,
    published: PublishedLists,
    votesysmgr_public: rsa.RSAPublicKey,
) -> VerifyReport:
    """The four checks a voter can run alone: recompute the code, verify the
    receipt signature, find the code in the published list, and (once the
    final list is out) match the (code, vote) row."""
    recomputed = compute_verification_code(
        vote.encode("utf-8"), receipt.timestamp, receipt.random_string
    )
    code_ok = recomputed == receipt.verification_code
    sig_ok = verify_detached(
        receipt.verification_code.encode("ascii"), receipt.signature, votesysmgr_public
    )
    published_ok = receipt.verification_code in set(published.verification_codes)
    final_ok: bool | None
    if published.final_votes or published.totals:
        final_ok = (receipt.verification_code, vote) in set(published.final_votes)
    else:
        final_ok = None
    return VerifyReport(
        code_recomputed=code_ok,
        signature_valid=sig_ok,
        code_published=published_ok,
        final_row_matches=final_ok,
    )


def verify_count(published: PublishedLists) -> bool:
    """Recount the published final list and compare with the published
    totals (and with the code list length)."""
    recount = Counter(vote for _, vote in published.final_votes)
    if dict(recount) != dict(published.totals):
        return False
    return len(published.final_votes) == len(published.verification_codes)
