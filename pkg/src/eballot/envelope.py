"""Key pairs, sign-then-encrypt envelopes, detached signatures, digests.

Wire format (version 1), so that independently produced messages interoperate:

    envelope      := b"EENV" | version:u8 | recipient_fpr:32 | len:u32 | ciphertext
    ciphertext    := kb_len:u16 | key_block | nonce:12 | aead_body
    key_block     := RSA-OAEP-SHA256(session_key:32) under the recipient key
    aead_body     := AES-256-GCM(inner) with key=session_key and
                     AAD = b"EENV" | version | recipient_fpr | key_block
    inner         := spki_len:u16 | signer_spki_der | pt_len:u32 | plaintext
                     | sig_len:u16 | signature
    signature     := RSA-PSS-SHA256 over b"eballot-envelope-v1" | recipient_fpr
                     | plaintext, under the signer key

    detached sig  := b"EDSG" | version:u8 | signer_fpr:32 | sig_len:u16 | signature
    signature     := RSA-PSS-SHA256 over the signed bytes

Fingerprints are the SHA-256 digest of the DER SubjectPublicKeyInfo, lowercase
hex. The signer's public key travels inside the encrypted body; the verifier
checks its fingerprint against the expected signer, so no keyring lookup is
needed at decrypt time and the signer is invisible until decryption.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    DecryptError,
    FormatError,
    IntegrityError,
    KeyUnavailable,
    SignerMismatch,
    StrengthError,
)

MIN_KEY_BITS = 2048
FORMAT_VERSION = 1

_ENVELOPE_MAGIC = b"EENV"
_DETACHED_MAGIC = b"EDSG"
_SIGN_CONTEXT = b"eballot-envelope-v1"

_OAEP = padding.OAEP(
    mgf=padding.MGF1(algorithm=hashes.SHA256()), algorithm=hashes.SHA256(), label=None
)
_PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=32)


class Role(str, Enum):
    AUTH_MGR = "AuthMgr"
    AUTH_SYS_MGR = "AuthSysMgr"
    ANON_SYS_MGR = "AnonSysMgr"
    VOTE_MGR = "VoteMgr"
    VOTE_SYS_MGR = "VoteSysMgr"

    @property
    def dirname(self) -> str:
        return self.value.lower()


class PassphraseMode(str, Enum):
    FILE = "file"
    AGENT = "agent"


def digest(data: bytes) -> str:
    """SHA-256 of `data` as lowercase hex (64 chars)."""
    import hashlib

    return hashlib.sha256(data).hexdigest()


def fingerprint_of(public_key: rsa.RSAPublicKey) -> str:
    spki = public_key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )
    return digest(spki)


def _fpr_raw(fpr_hex: str) -> bytes:
    try:
        raw = bytes.fromhex(fpr_hex)
    except ValueError as e:
        raise FormatError(f"fingerprint is not hex: {fpr_hex!r}") from e
    if len(raw) != 32:
        raise FormatError("fingerprint must be 32 bytes of hex")
    return raw


# --- private key sources ------------------------------------------------------

class KeyAgent:
    """Holds the unlocked private key in process memory (agent passphrase mode).

    Once stopped, every later use fails hard: the application cannot work
    without its agent.
    """

    def __init__(self, key: rsa.RSAPrivateKey):
        self._key: rsa.RSAPrivateKey | None = key

    def stop(self) -> None:
        self._key = None

    def private_key(self) -> rsa.RSAPrivateKey:
        if self._key is None:
            raise KeyUnavailable("key agent stopped; private key no longer available")
        return self._key


class PassphraseFileKeySource:
    """Reads the passphrase file and unlocks the key at every use (file mode)."""

    def __init__(self, key_path: Path, passphrase_path: Path):
        self.key_path = Path(key_path)
        self.passphrase_path = Path(passphrase_path)
        self._cache: tuple[bytes, bytes, rsa.RSAPrivateKey] | None = None
        self._cache_lock = threading.Lock()

    def private_key(self) -> rsa.RSAPrivateKey:
        # Both files are consulted on every use so that removing or changing
        # either one takes effect immediately; only the parse is memoized.
        try:
            passphrase = self.passphrase_path.read_bytes().strip()
            pem = self.key_path.read_bytes()
        except OSError as e:
            raise KeyUnavailable(f"cannot unlock private key: {e}") from e
        with self._cache_lock:
            if self._cache is not None and self._cache[:2] == (passphrase, pem):
                return self._cache[2]
        try:
            key = serialization.load_pem_private_key(pem, password=passphrase)
        except (ValueError, TypeError) as e:
            raise KeyUnavailable(f"cannot unlock private key: {e}") from e
        if not isinstance(key, rsa.RSAPrivateKey):
            raise KeyUnavailable("stored key is not an RSA private key")
        with self._cache_lock:
            self._cache = (passphrase, pem, key)
        return key


@dataclass
class ManagerIdentity:
    """A named official role with its key pair and passphrase handling mode."""

    role: Role
    public_key: rsa.RSAPublicKey
    fingerprint: str
    passphrase_mode: PassphraseMode
    key_source: KeyAgent | PassphraseFileKeySource = field(repr=False)

    def private_key(self) -> rsa.RSAPrivateKey:
        return self.key_source.private_key()


def generate_identity(
    role: Role | str,
    key_bits: int = MIN_KEY_BITS,
    passphrase_mode: PassphraseMode = PassphraseMode.AGENT,
) -> ManagerIdentity:
    """Create a fresh identity for `role`; refuses key sizes below 2048 bits."""
    role = Role(role)
    if key_bits < MIN_KEY_BITS:
        raise StrengthError(f"key_bits {key_bits} below floor {MIN_KEY_BITS}")
    key = rsa.generate_private_key(public_exponent=65537, key_size=key_bits)
    public = key.public_key()
    return ManagerIdentity(
        role=role,
        public_key=public,
        fingerprint=fingerprint_of(public),
        passphrase_mode=PassphraseMode(passphrase_mode),
        key_source=KeyAgent(key),
    )


def save_identity(
    identity: ManagerIdentity,
    directory: Path,
    passphrase: str | None = None,
    write_passphrase_file: bool = True,
) -> str:
    """Persist an identity as private.pem (passphrase-encrypted), public.pem
    and, by default, a mode-0400 passphrase file. Returns the passphrase."""
    from .credentials import generate_credential

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    passphrase = passphrase or generate_credential(length=32)
    pem = identity.private_key().private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.BestAvailableEncryption(passphrase.encode("utf-8")),
    )
    (directory / "private.pem").write_bytes(pem)
    (directory / "public.pem").write_bytes(
        identity.public_key.public_bytes(
            serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
        )
    )
    if write_passphrase_file:
        pp = directory / "passphrase"
        pp.write_text(passphrase + "\n")
        os.chmod(pp, 0o400)
    return passphrase


def load_identity(
    directory: Path,
    role: Role | str,
    passphrase_mode: PassphraseMode = PassphraseMode.FILE,
    passphrase: str | None = None,
) -> ManagerIdentity:
    """Load a saved identity.

    File mode re-reads the passphrase file at every use; agent mode unlocks
    the key once now (the passphrase may be passed in, standing in for the
    operator typing it at boot) and keeps it in memory.
    """
    directory = Path(directory)
    passphrase_mode = PassphraseMode(passphrase_mode)
    public_key, fingerprint = load_public_key(directory / "public.pem")
    key_path = directory / "private.pem"
    pp_path = directory / "passphrase"
    source: KeyAgent | PassphraseFileKeySource
    if passphrase_mode is PassphraseMode.FILE:
        source = PassphraseFileKeySource(key_path, pp_path)
    else:
        if passphrase is None:
            try:
                passphrase = pp_path.read_text().strip()
            except OSError as e:
                raise KeyUnavailable(f"no passphrase supplied for agent load: {e}") from e
        try:
            key = serialization.load_pem_private_key(
                key_path.read_bytes(), password=passphrase.encode("utf-8")
            )
        except (OSError, ValueError, TypeError) as e:
            raise KeyUnavailable(f"cannot unlock private key: {e}") from e
        source = KeyAgent(key)  # type: ignore[arg-type]
    return ManagerIdentity(
        role=Role(role),
        public_key=public_key,
        fingerprint=fingerprint,
        passphrase_mode=passphrase_mode,
        key_source=source,
    )


def load_public_key(path: Path) -> tuple[rsa.RSAPublicKey, str]:
    pub = serialization.load_pem_public_key(Path(path).read_bytes())
    if not isinstance(pub, rsa.RSAPublicKey):
        raise FormatError("stored public key is not RSA")
    return pub, fingerprint_of(pub)


# --- envelopes ----------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    """Sign-then-encrypt message addressed to a single recipient. The signer
    is recoverable only after decryption."""

    ciphertext: bytes
    recipient_fingerprint: str
    format_version: int = FORMAT_VERSION

    def to_bytes(self) -> bytes:
        return b"".join(
            (
                _ENVELOPE_MAGIC,
                struct.pack(">B", self.format_version),
                _fpr_raw(self.recipient_fingerprint),
                struct.pack(">I", len(self.ciphertext)),
                self.ciphertext,
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if len(data) < 41 or data[:4] != _ENVELOPE_MAGIC:
            raise FormatError("not an envelope message")
        version = data[4]
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported envelope version {version}")
        fpr = data[5:37].hex()
        (ct_len,) = struct.unpack_from(">I", data, 37)
        ct = data[41 : 41 + ct_len]
        if len(ct) != ct_len or 41 + ct_len != len(data):
            raise FormatError("envelope length mismatch")
        return cls(ciphertext=ct, recipient_fingerprint=fpr, format_version=version)


@dataclass(frozen=True)
class DetachedSignature:
    signature_bytes: bytes
    signer_fingerprint: str

    def to_bytes(self) -> bytes:
        return b"".join(
            (
                _DETACHED_MAGIC,
                struct.pack(">B", FORMAT_VERSION),
                _fpr_raw(self.signer_fingerprint),
                struct.pack(">H", len(self.signature_bytes)),
                self.signature_bytes,
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "DetachedSignature":
        if len(data) < 39 or data[:4] != _DETACHED_MAGIC:
            raise FormatError("not a detached signature message")
        if data[4] != FORMAT_VERSION:
            raise FormatError(f"unsupported signature version {data[4]}")
        fpr = data[5:37].hex()
        (n,) = struct.unpack_from(">H", data, 37)
        sig = data[39 : 39 + n]
        if len(sig) != n or 39 + n != len(data):
            raise FormatError("signature length mismatch")
        return cls(signature_bytes=sig, signer_fingerprint=fpr)


def _aad(recipient_fpr_raw: bytes, key_block: bytes) -> bytes:
    return (
        _ENVELOPE_MAGIC
        + struct.pack(">B", FORMAT_VERSION)
        + recipient_fpr_raw
        + key_block
    )


def _seal_inner(
    inner: bytes, recipient_public: rsa.RSAPublicKey, recipient_fpr: str
) -> Envelope:
    session_key = os.urandom(32)
    key_block = recipient_public.encrypt(session_key, _OAEP)
    nonce = os.urandom(12)
    body = AESGCM(session_key).encrypt(nonce, inner, _aad(_fpr_raw(recipient_fpr), key_block))
    ciphertext = struct.pack(">H", len(key_block)) + key_block + nonce + body
    return Envelope(ciphertext=ciphertext, recipient_fingerprint=recipient_fpr)


def sign_encrypt(
    plaintext: bytes, signer: ManagerIdentity, recipient_public: rsa.RSAPublicKey
) -> Envelope:
    """Sign `plaintext` as `signer`, then encrypt it to the recipient key."""
    recipient_fpr = fingerprint_of(recipient_public)
    signature = signer.private_key().sign(
        _SIGN_CONTEXT + _fpr_raw(recipient_fpr) + plaintext, _PSS, hashes.SHA256()
    )
    spki = signer.public_key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )
    inner = b"".join(
        (
            struct.pack(">H", len(spki)),
            spki,
            struct.pack(">I", len(plaintext)),
            plaintext,
            struct.pack(">H", len(signature)),
            signature,
        )
    )
    return _seal_inner(inner, recipient_public, recipient_fpr)


def _parse_inner(inner: bytes) -> tuple[bytes, bytes, bytes]:
    try:
        offset = 0
        (spki_len,) = struct.unpack_from(">H", inner, offset)
        offset += 2
        spki = inner[offset : offset + spki_len]
        offset += spki_len
        (pt_len,) = struct.unpack_from(">I", inner, offset)
        offset += 4
        plaintext = inner[offset : offset + pt_len]
        offset += pt_len
        (sig_len,) = struct.unpack_from(">H", inner, offset)
        offset += 2
        signature = inner[offset : offset + sig_len]
        offset += sig_len
        if offset != len(inner) or len(spki) != spki_len or len(plaintext) != pt_len:
            raise ValueError("length mismatch")
        if len(signature) != sig_len:
            raise ValueError("length mismatch")
    except (struct.error, ValueError) as e:
        raise SignerMismatch(f"decrypted payload is not a signed message: {e}") from e
    return spki, plaintext, signature


def decrypt_verify(
    env: Envelope, recipient: ManagerIdentity, expected_signer_fpr: str
) -> bytes:
    """Decrypt with the recipient key and verify the embedded signature was
    made by `expected_signer_fpr`. Returns the original plaintext."""
    if env.recipient_fingerprint != recipient.fingerprint:
        raise DecryptError("envelope is not addressed to this recipient")
    ct = env.ciphertext
    try:
        (kb_len,) = struct.unpack_from(">H", ct, 0)
        key_block = ct[2 : 2 + kb_len]
        nonce = ct[2 + kb_len : 14 + kb_len]
        body = ct[14 + kb_len :]
        if len(key_block) != kb_len or len(nonce) != 12:
            raise ValueError("truncated ciphertext")
    except (struct.error, ValueError) as e:
        raise IntegrityError(f"corrupt envelope structure: {e}") from e
    private = recipient.private_key()
    try:
        session_key = private.decrypt(key_block, _OAEP)
    except ValueError as e:
        raise IntegrityError("corrupt key block") from e
    try:
        inner = AESGCM(session_key).decrypt(
            nonce, body, _aad(_fpr_raw(env.recipient_fingerprint), key_block)
        )
    except InvalidTag as e:
        raise IntegrityError("envelope body fails authentication") from e
    spki, plaintext, signature = _parse_inner(inner)
    if not signature or not spki:
        raise SignerMismatch("payload was encrypted without a signature")
    try:
        signer_public = serialization.load_der_public_key(spki)
    except (ValueError, TypeError) as e:
        raise SignerMismatch(f"embedded signer key unreadable: {e}") from e
    if not isinstance(signer_public, rsa.RSAPublicKey):
        raise SignerMismatch("embedded signer key has the wrong type")
    if fingerprint_of(signer_public) != expected_signer_fpr:
        raise SignerMismatch(
            f"signed by {fingerprint_of(signer_public)[:16]}…, "
            f"expected {expected_signer_fpr[:16]}…"
        )
    try:
        signer_public.verify(
            signature,
            _SIGN_CONTEXT + _fpr_raw(env.recipient_fingerprint) + plaintext,
            _PSS,
            hashes.SHA256(),
        )
    except InvalidSignature as e:
        raise SignerMismatch("embedded signature does not verify") from e
    return plaintext


def detached_sign(data: bytes, signer: ManagerIdentity) -> DetachedSignature:
    sig = signer.private_key().sign(data, _PSS, hashes.SHA256())
    return DetachedSignature(signature_bytes=sig, signer_fingerprint=signer.fingerprint)


def verify_detached(
    data: bytes, sig: DetachedSignature, signer_public: rsa.RSAPublicKey
) -> bool:
    try:
        signer_public.verify(sig.signature_bytes, data, _PSS, hashes.SHA256())
        return True
    except InvalidSignature:
        return False
