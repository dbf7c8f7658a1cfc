"""Authentication server: verifies voter credentials, burns one-time tokens,
and issues enveloped authorizations.

Write ordering per request is used-token record first, then issued-
authorization record, then (server_store) the temporary envelope copy, then
the completion journal line. A crash in between is reconciled at the next
startup: records with no completion line are noted in the exceptions log for
the officials, never silently dropped. All cross-request races are settled
by the write-once store's exclusive create, so no in-memory table is
authoritative.
"""

from __future__ import annotations

import base64
import hmac
import json
from dataclasses import dataclass
from pathlib import Path

from pydantic import BaseModel

from .ballot import BallotManifest, BallotPaths, ReissueMode, TokenBinding
from .credentials import (
    CredentialKind,
    canonical_json,
    generate_credential,
    generate_pin,
    hash_password,
    utc_now_rfc3339,
    validate,
    verify_password,
)
from .envelope import (
    Envelope,
    ManagerIdentity,
    Role,
    digest,
    load_identity,
    load_public_key,
    sign_encrypt,
)
from .errors import (
    AlreadyExists,
    BadCredentials,
    NotFound,
    NotOpen,
    SealViolation,
    ServiceError,
    TokenInvalid,
    TokenNotBound,
    TokenUsed,
)
from .sealing import SealController, SealState
from .worm import CompletionJournal, WormStore


@dataclass(frozen=True)
class AuthResult:
    """What a successful authentication hands the voter."""

    envelope: Envelope
    pin: str | None
    reissued: bool = False


class AuthService:
    principal = Role.AUTH_SYS_MGR.value

    def __init__(
        self,
        root: Path,
        seal: SealController | None = None,
        identity: ManagerIdentity | None = None,
    ):
        self.paths = BallotPaths(root)
        self.manifest = BallotManifest.load(self.paths.manifest)
        self.config = self.manifest.config
        self.identity = identity or load_identity(
            self.paths.keys_dir(Role.AUTH_SYS_MGR), Role.AUTH_SYS_MGR
        )
        self._authmgr_public, _ = load_public_key(
            self.paths.public_key_file(Role.AUTH_MGR)
        )
        self._votesysmgr_public, _ = load_public_key(
            self.paths.public_key_file(Role.VOTE_SYS_MGR)
        )
        self._passwords: dict[str, str] = json.loads(
            self.paths.passwords_file.read_text()
        )
        token_table = json.loads(self.paths.tokens_file.read_text())
        self._binding = TokenBinding(token_table["binding"])
        self._token_digests = set(token_table.get("token_digests", ()))
        self._tokens_by_username: dict[str, str] = token_table.get("by_username", {})
        mtime = self.config.fixed_mtime
        self._used_tokens = WormStore(self.paths.used_tokens, fixed_mtime=mtime)
        self._issued = WormStore(self.paths.issued_authorizations, fixed_mtime=mtime)
        self._temp = WormStore(
            self.paths.temp_authorizations, fixed_mtime=mtime, allow_purge=True
        )
        self.seal = seal or SealController(
            self.paths.auth_state, rules=self.paths.auth_guard_rules()
        )
        self._journal = CompletionJournal(self.paths.issuance_log)
        # Verifying an unknown user against this hash keeps response timing
        # independent of username validity.
        self._dummy_hash = hash_password(
            generate_credential(length=32), iterations=self.config.kdf_iterations
        )
        self.reconcile()

    # --- startup reconciliation ---

    def reconcile(self) -> list[str]:
        """Settle records left by a crash mid-issuance. A used-token record
        with a stored temporary envelope completed everything but its journal
        line (roll forward); one without is voided into the exceptions log."""
        done = self._journal.load()
        voided = []
        for name in self._used_tokens.list_names():
            d = digest(name.encode("utf-8"))
            if d in done:
                continue
            if (
                self.config.reissue_mode is ReissueMode.SERVER_STORE
                and self._temp.exists(name)
            ):
                self._journal_complete(d)
                continue
            self._append_exception(
                {"kind": "unconfirmed_token_record", "token_digest": d}
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
        decision = self.seal.guard_write(
            self.paths.issuance_log, self.principal, "append"
        )
        if not decision.allowed:
            raise SealViolation(decision.reason)
        self._journal.append(digest_hex)

    def _append_exception(self, event: dict) -> None:
        decision = self.seal.guard_write(
            self.paths.auth_exceptions, self.principal, "append"
        )
        if not decision.allowed:
            raise SealViolation(decision.reason)
        with open(self.paths.auth_exceptions, "a") as f:
            f.write(canonical_json(event) + "\n")

    # --- the voter-facing operation ---

    def _require_open(self) -> None:
        if self.seal.state is not SealState.FROZEN:
            raise NotOpen("voting has not opened (servers not sealed)")

    def authenticate_and_issue(
        self, username: str, password: str, vote_token: str
    ) -> AuthResult:
        """Exchange (username, password, one-time token) for an authorization
        envelope addressed to the vote server, plus the clear PIN."""
        self._require_open()
        if not validate(
            vote_token, CredentialKind.TOKEN, token_length=self.config.token_length
        ):
            raise TokenInvalid("vote token fails the charset/length rules")
        username_ok = validate(username, CredentialKind.USERNAME)
        stored_hash = self._passwords.get(username) if username_ok else None
        # The dummy verify always runs so the timing does not reveal whether
        # the username exists.
        password_ok = verify_password(password, stored_hash or self._dummy_hash)
        if stored_hash is None:
            password_ok = False
        token_digest = digest(vote_token.encode("utf-8"))
        if self._binding is TokenBinding.STRICT_PER_USERNAME:
            expected = self._tokens_by_username.get(username, "")
            token_known = bool(expected) and hmac.compare_digest(expected, token_digest)
        else:
            token_known = token_digest in self._token_digests
        if not password_ok:
            raise BadCredentials("unknown username or wrong password")
        if not token_known:
            if self._binding is TokenBinding.STRICT_PER_USERNAME:
                raise TokenNotBound("vote token is not assigned to this username")
            raise BadCredentials("vote token not recognized")

        if self._used_tokens.exists(vote_token):
            return self._reissue_or_fail(vote_token)
        timestamp = utc_now_rfc3339()
        token_record = canonical_json(
            {"vote_token": vote_token, "username": username, "timestamp": timestamp}
        ).encode("utf-8")
        token_env = sign_encrypt(token_record, self.identity, self._authmgr_public)
        try:
            self._guarded_create(self._used_tokens, vote_token, token_env.to_bytes())
        except AlreadyExists:
            return self._reissue_or_fail(vote_token)

        pin = generate_pin(self.config.pin_length) if self.config.pin_enabled else ""
        while True:
            authorization = generate_credential(length=self.config.token_length)
            voter_env = sign_encrypt(
                canonical_json({"authorization": authorization, "pin": pin}).encode(
                    "utf-8"
                ),
                self.identity,
                self._votesysmgr_public,
            )
            issued_record = sign_encrypt(
                canonical_json({"vote_authorization": authorization}).encode("utf-8"),
                self.identity,
                self._authmgr_public,
            )
            try:
                self._guarded_create(
                    self._issued, authorization, issued_record.to_bytes()
                )
                break
            except AlreadyExists:
                continue  # authorization collision: roll a fresh value
        if self.config.reissue_mode is ReissueMode.SERVER_STORE:
            self._guarded_create(self._temp, vote_token, voter_env.to_bytes())
        self._journal_complete(token_digest)
        clear_pin = pin if (pin and self.config.return_pin_clear) else None
        return AuthResult(envelope=voter_env, pin=clear_pin, reissued=False)

    def _reissue_or_fail(self, vote_token: str) -> AuthResult:
        if self.config.reissue_mode is ReissueMode.SERVER_STORE:
            try:
                stored = self._temp.read(vote_token)
            except NotFound:
                raise TokenUsed(
                    "token already being processed; retry to fetch the stored "
                    "authorization"
                ) from None
            return AuthResult(
                envelope=Envelope.from_bytes(stored), pin=None, reissued=True
            )
        raise TokenUsed("vote token has already been used")

    # --- post-election ---

    def export_auth_archive(self, output_path: Path) -> str:
        """Pack used-token and issued-authorization records for the ballot
        organizer; refuses while the seal is still frozen."""
        if self.seal.state is SealState.FROZEN:
            raise SealViolation("export requires the seal to be removed first")
        from .archive import write_archive

        return write_archive(
            Path(output_path),
            {
                "used_tokens": self.paths.used_tokens,
                "issued_authorizations": self.paths.issued_authorizations,
            },
            self.identity,
        )

    def purge_temp_authorizations(self) -> int:
        if self.seal.state is SealState.FROZEN:
            raise SealViolation("purge requires the seal to be removed first")
        return self._temp.purge_all()

    def counts(self) -> dict[str, int]:
        return {
            "used_tokens": self._used_tokens.count(),
            "issued_authorizations": self._issued.count(),
            "temp_authorizations": self._temp.count(),
        }


# --- HTTP surface ---------------------------------------------------------------


class AuthenticateRequest(BaseModel):
    username: str
    password: str
    vote_token: str


def build_auth_app(service: AuthService):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="authentication server", docs_url=None, redoc_url=None)
    uniform = service.config.token_binding is TokenBinding.INDEPENDENT
    status_by_code = {
        "not_open": 503,
        "token_invalid": 400,
        "bad_credentials": 403,
        "token_used": 403,
        "token_not_bound": 403,
    }

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        code = exc.code
        if uniform and code in ("bad_credentials", "token_used"):
            # One shape for both, so a stolen token and a wrong password are
            # indistinguishable to a probing client.
            return JSONResponse(
                status_code=403, content={"error": "authentication_failed"}
            )
        return JSONResponse(
            status_code=status_by_code.get(code, 400), content={"error": code}
        )

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "role": "auth",
            "ballot_id": service.manifest.ballot_id,
            "seal_state": service.seal.state.value,
            "signing_fingerprint": service.identity.fingerprint,
            "tls_fingerprint": service.config.auth_tls_fingerprint or None,
        }

    @app.post("/v1/authenticate")
    def authenticate(body: AuthenticateRequest):
        result = service.authenticate_and_issue(
            body.username, body.password, body.vote_token
        )
        return {
            "envelope": base64.b64encode(result.envelope.to_bytes()).decode("ascii"),
            "pin": result.pin,
            "signer_fingerprint": service.identity.fingerprint,
            "reissued": result.reissued,
        }

    return app
