"""Ballot definition, configuration, on-disk layout, and election setup.

Setup builds one directory tree per ballot:

    manifest.json           public manifest (definition, roster, fingerprints)
    keys/<role>/            each official's key pair + passphrase file
    public_keys/<role>.pem  keyring installed on the servers
    tls/                    self-signed server certificates
    credentials/<user>.txt  per-voter bundle for out-of-band distribution
    auth/                   authentication server data (records, logs, state)
    vote/                   vote server data (records, logs, state)
    officials/              per-official working directories
    archives/               exported record archives
    published/              published lists
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.x509.oid import NameOID

from .credentials import (
    DEFAULT_KDF_ITERATIONS,
    DEFAULT_PIN_LENGTH,
    DEFAULT_TOKEN_LENGTH,
    CredentialKind,
    generate_credential,
    hash_password,
    validate,
)
from .envelope import ManagerIdentity, Role, digest, generate_identity, save_identity
from .errors import FormatError
from .sealing import GuardRules
from .worm import FIXED_MTIME

MAX_VOTE_BYTES = 1024


class TokenBinding(str, Enum):
    STRICT_PER_USERNAME = "strict_per_username"
    INDEPENDENT = "independent"


class ReissueMode(str, Enum):
    NONE = "none"
    VOTER_SAVE = "voter_save"
    SERVER_STORE = "server_store"


@dataclass(frozen=True)
class BallotDefinition:
    """The single question put to the voters."""

    ballot_id: str
    question: str
    choices: tuple[str, ...]
    allow_write_in: bool = False

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.ballot_id or not self.question:
            raise FormatError("ballot_id and question are required")
        if len(set(self.choices)) != len(self.choices):
            raise FormatError("choice labels must be distinct")
        if len(self.choices) < 2 and not self.allow_write_in:
            raise FormatError("need at least 2 choices unless write-ins are allowed")

    def to_dict(self) -> dict:
        return {
            "ballot_id": self.ballot_id,
            "question": self.question,
            "choices": list(self.choices),
            "allow_write_in": self.allow_write_in,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BallotDefinition":
        return cls(
            ballot_id=data["ballot_id"],
            question=data["question"],
            choices=tuple(data["choices"]),
            allow_write_in=bool(data.get("allow_write_in", False)),
        )


@dataclass
class BallotConfig:
    """Election-wide knobs shared by both servers."""

    token_binding: TokenBinding = TokenBinding.INDEPENDENT
    reissue_mode: ReissueMode = ReissueMode.NONE
    pin_enabled: bool = True
    return_pin_clear: bool = True
    token_length: int = DEFAULT_TOKEN_LENGTH
    pin_length: int = DEFAULT_PIN_LENGTH
    password_length: int = 20
    kdf_iterations: int = DEFAULT_KDF_ITERATIONS
    auth_port: int = 8441
    anon_port: int = 8442
    vote_port: int = 8443
    auth_tls_fingerprint: str = ""
    vote_tls_fingerprint: str = ""
    fixed_mtime: float = FIXED_MTIME

    def __post_init__(self):
        self.token_binding = TokenBinding(self.token_binding)
        self.reissue_mode = ReissueMode(self.reissue_mode)
        if self.token_length < 16:
            raise FormatError("token_length below 16")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["token_binding"] = self.token_binding.value
        data["reissue_mode"] = self.reissue_mode.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "BallotConfig":
        return cls(**data)


@dataclass
class BallotManifest:
    """Public description of one ballot: who runs it, what is asked, and the
    fingerprints voters should pin."""

    ballot_id: str
    definition: BallotDefinition
    roster: list[str]
    config: BallotConfig
    manager_fingerprints: dict[str, str]
    tls_fingerprints: dict[str, str] = field(default_factory=dict)

    def save(self, path: Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "ballot_id": self.ballot_id,
                    "definition": self.definition.to_dict(),
                    "roster": self.roster,
                    "config": self.config.to_dict(),
                    "manager_fingerprints": self.manager_fingerprints,
                    "tls_fingerprints": self.tls_fingerprints,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

    @classmethod
    def load(cls, path: Path) -> "BallotManifest":
        data = json.loads(Path(path).read_text())
        return cls(
            ballot_id=data["ballot_id"],
            definition=BallotDefinition.from_dict(data["definition"]),
            roster=list(data["roster"]),
            config=BallotConfig.from_dict(data["config"]),
            manager_fingerprints=dict(data["manager_fingerprints"]),
            tls_fingerprints=dict(data.get("tls_fingerprints", {})),
        )


class BallotPaths:
    """All well-known locations inside one ballot tree."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.manifest = self.root / "manifest.json"
        self.keys_root = self.root / "keys"
        self.public_keys = self.root / "public_keys"
        self.tls_dir = self.root / "tls"
        self.credentials_dir = self.root / "credentials"
        self.auth_dir = self.root / "auth"
        self.used_tokens = self.auth_dir / "used_tokens"
        self.issued_authorizations = self.auth_dir / "issued_authorizations"
        self.temp_authorizations = self.auth_dir / "temp_authorizations"
        self.passwords_file = self.auth_dir / "passwords.json"
        self.tokens_file = self.auth_dir / "tokens.json"
        self.issuance_log = self.auth_dir / "issuance.log"
        self.auth_exceptions = self.auth_dir / "exceptions.log"
        self.auth_state = self.auth_dir / "state"
        self.vote_dir = self.root / "vote"
        self.used_authorizations = self.vote_dir / "used_authorizations"
        self.votes = self.vote_dir / "votes"
        self.cast_log = self.vote_dir / "cast.log"
        self.vote_exceptions = self.vote_dir / "exceptions.log"
        self.vote_state = self.vote_dir / "state"
        self.officials_dir = self.root / "officials"
        self.authmgr_dir = self.officials_dir / "authmgr"
        self.votemgr_dir = self.officials_dir / "votemgr"
        self.issued_tokens_file = self.authmgr_dir / "issued_tokens.txt"
        self.archives_dir = self.root / "archives"
        self.published_dir = self.root / "published"

    def keys_dir(self, role: Role) -> Path:
        return self.keys_root / role.dirname

    def public_key_file(self, role: Role) -> Path:
        return self.public_keys / f"{role.dirname}.pem"

    def auth_guard_rules(self) -> GuardRules:
        return GuardRules(
            worm_dirs=(
                self.used_tokens,
                self.issued_authorizations,
                self.temp_authorizations,
            ),
            append_logs=(self.issuance_log, self.auth_exceptions),
            readonly_paths=(
                self.manifest,
                self.public_keys,
                self.keys_root,
                self.credentials_dir,
                self.passwords_file,
                self.tokens_file,
            ),
        )

    def vote_guard_rules(self) -> GuardRules:
        return GuardRules(
            worm_dirs=(self.used_authorizations, self.votes),
            append_logs=(self.cast_log, self.vote_exceptions),
            readonly_paths=(self.manifest, self.public_keys, self.keys_root),
        )

    def baseline_roots(self) -> list[Path]:
        return [self.root]

    def baseline_exclude(self) -> list[Path]:
        # State dirs and operational logs change legitimately during the
        # election (the logs are verified via their hash chain instead);
        # the temp store is deletable by design; officials' working areas,
        # archives and published lists appear after the election.
        return [
            self.auth_state,
            self.vote_state,
            self.issuance_log,
            self.auth_exceptions,
            self.cast_log,
            self.vote_exceptions,
            self.temp_authorizations,
            self.officials_dir,
            self.archives_dir,
            self.published_dir,
        ]

    def baseline_growth_dirs(self) -> list[Path]:
        return [
            self.used_tokens,
            self.issued_authorizations,
            self.used_authorizations,
            self.votes,
        ]


# --- setup --------------------------------------------------------------------


def generate_tls_material(directory: Path, name: str) -> str:
    """Write a self-signed localhost certificate and key; returns the SHA-256
    fingerprint of the DER certificate (what voters pin)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    subject = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, name)])
    now = datetime.now(timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - timedelta(days=1))
        .not_valid_after(now + timedelta(days=365))
        .add_extension(
            x509.SubjectAlternativeName(
                [x509.DNSName("localhost"), x509.DNSName(name)]
            ),
            critical=False,
        )
        .sign(key, hashes.SHA256())
    )
    key_path = directory / f"{name}.key.pem"
    key_path.write_bytes(
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
    )
    os.chmod(key_path, 0o600)
    (directory / f"{name}.cert.pem").write_bytes(
        cert.public_bytes(serialization.Encoding.PEM)
    )
    return digest(cert.public_bytes(serialization.Encoding.DER))


def setup_ballot(
    root: Path,
    roster: list[str],
    definition: BallotDefinition,
    config: BallotConfig | None = None,
    with_tls: bool = True,
) -> tuple[BallotManifest, dict[str, ManagerIdentity]]:
    """Create the whole ballot tree: keys for the five officials, per-voter
    credential bundles, server data directories, and the public manifest.
    Returns the manifest and the freshly generated identities."""
    config = config or BallotConfig()
    if not roster:
        raise FormatError("voter roster is empty")
    if len(set(roster)) != len(roster):
        raise FormatError("duplicate usernames in roster")
    for username in roster:
        if not validate(username, CredentialKind.USERNAME):
            raise FormatError(f"invalid roster username: {username!r}")

    paths = BallotPaths(root)
    for d in (
        paths.public_keys,
        paths.credentials_dir,
        paths.used_tokens,
        paths.issued_authorizations,
        paths.temp_authorizations,
        paths.used_authorizations,
        paths.votes,
        paths.auth_state,
        paths.vote_state,
        paths.authmgr_dir,
        paths.votemgr_dir,
        paths.archives_dir,
        paths.published_dir,
    ):
        d.mkdir(parents=True, exist_ok=True)

    identities: dict[str, ManagerIdentity] = {}
    fingerprints: dict[str, str] = {}
    for role in Role:
        identity = generate_identity(role)
        save_identity(identity, paths.keys_dir(role))
        paths.public_key_file(role).write_text(
            identity.public_key.public_bytes(
                serialization.Encoding.PEM,
                serialization.PublicFormat.SubjectPublicKeyInfo,
            ).decode("ascii")
        )
        identities[role.value] = identity
        fingerprints[role.value] = identity.fingerprint

    tls_fingerprints: dict[str, str] = {}
    if with_tls:
        tls_fingerprints["auth"] = generate_tls_material(paths.tls_dir, "auth")
        tls_fingerprints["vote"] = generate_tls_material(paths.tls_dir, "vote")
        config.auth_tls_fingerprint = tls_fingerprints["auth"]
        config.vote_tls_fingerprint = tls_fingerprints["vote"]

    passwords: dict[str, str] = {}
    token_digests: list[str] = []
    tokens_by_username: dict[str, str] = {}
    all_tokens: list[str] = []
    for username in roster:
        password = generate_credential(length=config.password_length)
        token = generate_credential(length=config.token_length)
        passwords[username] = hash_password(password, iterations=config.kdf_iterations)
        token_digests.append(digest(token.encode("utf-8")))
        tokens_by_username[username] = digest(token.encode("utf-8"))
        all_tokens.append(token)
        bundle = paths.credentials_dir / f"{username}.txt"
        bundle.write_text(
            "\n".join(
                (
                    f"ballot: {definition.ballot_id}",
                    f"username: {username}",
                    f"password: {password}",
                    f"vote_token: {token}",
                    f"auth_server_fingerprint: {tls_fingerprints.get('auth', '')}",
                    f"vote_server_fingerprint: {tls_fingerprints.get('vote', '')}",
                )
            )
            + "\n"
        )
        os.chmod(bundle, 0o600)

    paths.passwords_file.write_text(json.dumps(passwords, indent=2, sort_keys=True))
    os.chmod(paths.passwords_file, 0o600)
    token_table: dict = {"binding": config.token_binding.value}
    if config.token_binding is TokenBinding.STRICT_PER_USERNAME:
        token_table["by_username"] = tokens_by_username
    else:
        token_table["token_digests"] = sorted(token_digests)
    paths.tokens_file.write_text(json.dumps(token_table, indent=2, sort_keys=True))
    os.chmod(paths.tokens_file, 0o600)

    # The ballot organizer keeps the full token list; it is what makes the
    # post-election unused-token publication possible.
    paths.issued_tokens_file.write_text("\n".join(sorted(all_tokens)) + "\n")
    os.chmod(paths.issued_tokens_file, 0o600)

    manifest = BallotManifest(
        ballot_id=definition.ballot_id,
        definition=definition,
        roster=list(roster),
        config=config,
        manager_fingerprints=fingerprints,
        tls_fingerprints=tls_fingerprints,
    )
    manifest.save(paths.manifest)
    return manifest, identities
