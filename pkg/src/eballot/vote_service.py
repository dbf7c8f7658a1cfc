"""Vote server: serves the ballot, consumes authorizations once, stores
encrypted votes under their verification codes, and returns signed receipts.

The PIN inside the authorization envelope is compared before the
authorization is marked used, so a typo never burns it. The used-
authorization record and the vote record are written in that order and
completed with a journal line; startup reconciliation notes any crash
leftovers in the exceptions log. Nothing stored or logged here names the
voter: records carry only authorization values, codes and vote payloads.
"""

from __future__ import annotations

import base64
import hmac
import json
from dataclasses import dataclass
from pathlib import Path

from pydantic import BaseModel

from .ballot import MAX_VOTE_BYTES, BallotDefinition, BallotManifest, BallotPaths
from .credentials import (
    CredentialKind,
    canonical_json,
    compute_verification_code,
    generate_credential,
    utc_now_rfc3339,
    validate,
)
from .envelope import (
    DetachedSignature,
    Envelope,
    ManagerIdentity,
    Role,
    detached_sign,
    digest,
    load_identity,
    load_public_key,
    sign_encrypt,
    decrypt_verify,
)
from .errors import (
    AlreadyExists,
    AuthorizationUsed,
    BadEnvelope,
    EnvelopeError,
    FormatError,
    InvalidChoice,
    NotOpen,
    PinMismatch,
    SealViolation,
    ServiceError,
)
from .sealing import SealController, SealState
from .worm import CompletionJournal, WormStore


@dataclass(frozen=True)
class VoteReceipt:
    """Everything the voter needs to recompute and later locate their code."""

    verification_code: str
    signature: DetachedSignature
    timestamp: str
    random_string: str

    def to_dict(self) -> dict:
        return {
            "verification_code": self.verification_code,
            "signature": base64.b64encode(self.signature.to_bytes()).decode("ascii"),
            "timestamp": self.timestamp,
            "random_string": self.random_string,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VoteReceipt":
        return cls(
            verification_code=data["verification_code"],
            signature=DetachedSignature.from_bytes(
                base64.b64decode(data["signature"])
            ),
            timestamp=data["timestamp"],
            random_string=data["random_string"],
        )


class VoteService:
    principal = Role.VOTE_SYS_MGR.value

    def __init__(
        self,
        root: Path,
        seal: SealController | None = None,
        identity: ManagerIdentity | None = None,
    ):
        self.paths = BallotPaths(root)
        self.manifest = BallotManifest.load(self.paths.manifest)
        self.config = self.manifest.config
        self.definition: BallotDefinition = self.manifest.definition
        self.identity = identity or load_identity(
            self.paths.keys_dir(Role.VOTE_SYS_MGR), Role.VOTE_SYS_MGR
        )
        _, self._authsysmgr_fpr = load_public_key(
            self.paths.public_key_file(Role.AUTH_SYS_MGR)
        )
        self._authmgr_public, _ = load_public_key(
            self.paths.public_key_file(Role.AUTH_MGR)
        )
        self._votemgr_public, _ = load_public_key(
            self.paths.public_key_file(Role.VOTE_MGR)
        )
        mtime = self.config.fixed_mtime
        self._used_auths = WormStore(self.paths.used_authorizations, fixed_mtime=mtime)
        self._votes = WormStore(self.paths.votes, fixed_mtime=mtime)
        self.seal = seal or SealController(
            self.paths.vote_state, rules=self.paths.vote_guard_rules()
        )
        self._journal = CompletionJournal(self.paths.cast_log)
        self.reconcile()

    # --- startup reconciliation ---

    def reconcile(self) -> list[str]:
        """Note used-authorization records whose paired vote record cannot be
        confirmed (crash between the two writes)."""
        done = self._journal.load()
        voided = []
        for name in self._used_auths.list_names():
            d = digest(name.encode("utf-8"))
            if d in done:
                continue
            self._append_exception(
                {"kind": "unconfirmed_authorization_record", "authorization_digest": d}
            )
            self._journal_complete(d)
            voided.append(name)
        return voided

    # --- guarded writes ---

    def _guarded_create(self, store: WormStore, name: str, content: bytes) -> None:
        decision = self.seal.guard_write(store.path / name, self.principal, "create")
        if not decision.allowed:
            raise SealViolation(decision.reason)
        store.create_exclusive(name, content)

    def _journal_complete(self, digest_hex: str) -> None:
        decision = self.seal.guard_write(self.paths.cast_log, self.principal, "append")
        if not decision.allowed:
            raise SealViolation(decision.reason)
        self._journal.append(digest_hex)

    def _append_exception(self, event: dict) -> None:
        decision = self.seal.guard_write(
            self.paths.vote_exceptions, self.principal, "append"
        )
        if not decision.allowed:
            raise SealViolation(decision.reason)
        with open(self.paths.vote_exceptions, "a") as f:
            f.write(canonical_json(event) + "\n")

    # --- voter-facing operations ---

    def _require_open(self) -> None:
        if self.seal.state is not SealState.FROZEN:
            raise NotOpen("voting has not opened (servers not sealed)")

    def get_ballot(self) -> BallotDefinition:
        self._require_open()
        return self.definition

    def _canonical_vote(self, choice: str) -> bytes:
        if not isinstance(choice, str) or not choice:
            raise InvalidChoice("empty vote")
        payload = choice.encode("utf-8")
        if len(payload) > MAX_VOTE_BYTES:
            raise InvalidChoice(f"vote longer than {MAX_VOTE_BYTES} bytes")
        if choice not in self.definition.choices and not self.definition.allow_write_in:
            raise InvalidChoice(f"not a ballot option: {choice!r}")
        return payload

    def cast_vote(
        self, authorization_envelope: Envelope, pin: str | None, choice: str
    ) -> VoteReceipt:
        """Validate the enveloped authorization (and PIN), consume it, store
        the encrypted vote, and return the signed receipt."""
        self._require_open()
        vote_payload = self._canonical_vote(choice)
        try:
            opened = decrypt_verify(
                authorization_envelope, self.identity, self._authsysmgr_fpr
            )
        except EnvelopeError as e:
            raise BadEnvelope(f"authorization rejected: {e}") from None
        try:
            fields = json.loads(opened.decode("utf-8"))
            authorization = fields["authorization"]
            stored_pin = fields.get("pin", "")
        except (ValueError, KeyError, TypeError):
            raise BadEnvelope("authorization payload malformed") from None
        if not validate(
            authorization, CredentialKind.TOKEN, token_length=self.config.token_length
        ):
            raise BadEnvelope("authorization string malformed")
        if stored_pin:
            if not pin or not hmac.compare_digest(stored_pin, pin):
                # Checked before the authorization is consumed: a typo must
                # not burn it.
                raise PinMismatch("PIN does not match the authorization")

        timestamp = utc_now_rfc3339()
        used_record = sign_encrypt(
            canonical_json(
                {"vote_authorization": authorization, "timestamp": timestamp}
            ).encode("utf-8"),
            self.identity,
            self._authmgr_public,
        )
        try:
            self._guarded_create(self._used_auths, authorization, used_record.to_bytes())
        except AlreadyExists:
            raise AuthorizationUsed("authorization has already been used") from None

        while True:
            random_string = generate_credential(length=32)
            code = compute_verification_code(vote_payload, timestamp, random_string)
            vote_record = sign_encrypt(
                canonical_json({"vote": choice, "verification_code": code}).encode(
                    "utf-8"
                ),
                self.identity,
                self._votemgr_public,
            )
            try:
                self._guarded_create(self._votes, code, vote_record.to_bytes())
                break
            except AlreadyExists:
                continue  # code collision: roll a fresh random string
        self._journal_complete(digest(authorization.encode("utf-8")))
        signature = detached_sign(code.encode("ascii"), self.identity)
        return VoteReceipt(
            verification_code=code,
            signature=signature,
            timestamp=timestamp,
            random_string=random_string,
        )

    # --- post-election ---

    def export_vote_archives(
        self, output_auth_path: Path, output_votes_path: Path
    ) -> tuple[str, str]:
        """Two archives: used authorizations for the ballot organizer, votes
        for the tally official. Refuses while frozen."""
        if self.seal.state is SealState.FROZEN:
            raise SealViolation("export requires the seal to be removed first")
        from .archive import write_archive

        digest_auth = write_archive(
            Path(output_auth_path),
            {"used_authorizations": self.paths.used_authorizations},
            self.identity,
        )
        digest_votes = write_archive(
            Path(output_votes_path), {"votes": self.paths.votes}, self.identity
        )
        return digest_auth, digest_votes

    def counts(self) -> dict[str, int]:
        return {
            "used_authorizations": self._used_auths.count(),
            "votes": self._votes.count(),
        }


# --- HTTP surface ---------------------------------------------------------------


class CastRequest(BaseModel):
    envelope: str
    choice: str
    pin: str | None = None


def build_vote_app(service: VoteService):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="vote server", docs_url=None, redoc_url=None)
    status_by_code = {
        "not_open": 503,
        "bad_envelope": 400,
        "pin_mismatch": 403,
        "authorization_used": 409,
        "invalid_choice": 400,
    }

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=status_by_code.get(exc.code, 400), content={"error": exc.code}
        )

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "role": "vote",
            "ballot_id": service.manifest.ballot_id,
            "seal_state": service.seal.state.value,
            "signing_fingerprint": service.identity.fingerprint,
            "tls_fingerprint": service.config.vote_tls_fingerprint or None,
        }

    @app.get("/v1/ballot")
    def ballot():
        return service.get_ballot().to_dict()

    @app.post("/v1/vote")
    def vote(body: CastRequest):
        try:
            envelope = Envelope.from_bytes(base64.b64decode(body.envelope, validate=True))
        except (ValueError, FormatError):
            raise BadEnvelope("envelope is not valid base64 message bytes") from None
        receipt = service.cast_vote(envelope, body.pin, body.choice)
        return receipt.to_dict()

    return app
