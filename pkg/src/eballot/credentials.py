"""Ballot identifiers: pseudorandom credentials, their validation rules, and
the VerificationCode computed from a framed (vote, timestamp, random string)
triple.

All credential generation is modulo-bias-free (rejection sampling via
``random.SystemRandom``). The digest-input framing is length-prefixed so it
stays injective even though votes are arbitrary bytes.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
import re
import struct
from enum import Enum
from typing import Any

from .errors import FormatError, StrengthError

USERNAME_CHARSET = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.@-"
)
TOKEN_CHARSET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_."

MIN_CREDENTIAL_LENGTH = 16
DEFAULT_TOKEN_LENGTH = 32
DEFAULT_PIN_LENGTH = 6
USERNAME_MAX_LENGTH = 64

# PBKDF2-HMAC-SHA256; the scheme is fixed, the iteration count is configured
# per ballot so desk-scale test elections stay fast.
DEFAULT_KDF_ITERATIONS = 50_000

_RFC3339_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")

_system_random = random.SystemRandom()


class CredentialKind(str, Enum):
    USERNAME = "username"
    TOKEN = "token"
    AUTHORIZATION = "authorization"
    PIN = "pin"


def generate_credential(
    charset: str = TOKEN_CHARSET,
    length: int = DEFAULT_TOKEN_LENGTH,
    rng: random.SystemRandom | None = None,
) -> str:
    """Draw a uniform string of exactly `length` characters from `charset`.

    The entropy source must be cryptographically strong; the default is the
    OS CSPRNG. Lengths below 16 are refused outright.
    """
    if length < MIN_CREDENTIAL_LENGTH:
        raise StrengthError(
            f"credential length {length} below floor {MIN_CREDENTIAL_LENGTH}"
        )
    if not charset:
        raise ValueError("charset must be nonempty")
    rng = rng or _system_random
    return "".join(rng.choice(charset) for _ in range(length))


def generate_pin(length: int = DEFAULT_PIN_LENGTH, rng: random.SystemRandom | None = None) -> str:
    rng = rng or _system_random
    return "".join(rng.choice("0123456789") for _ in range(length))


def validate(
    value: str,
    kind: CredentialKind | str,
    *,
    token_length: int = DEFAULT_TOKEN_LENGTH,
    pin_length: int = DEFAULT_PIN_LENGTH,
) -> bool:
    """True iff `value` satisfies the charset and length rules for `kind`."""
    kind = CredentialKind(kind)
    if not isinstance(value, str):
        return False
    if kind is CredentialKind.USERNAME:
        return (
            1 <= len(value) <= USERNAME_MAX_LENGTH
            and all(c in USERNAME_CHARSET for c in value)
        )
    if kind in (CredentialKind.TOKEN, CredentialKind.AUTHORIZATION):
        return len(value) == token_length and all(c in TOKEN_CHARSET for c in value)
    if kind is CredentialKind.PIN:
        return len(value) == pin_length and value.isascii() and value.isdigit()
    return False


def is_rfc3339_utc(timestamp: str) -> bool:
    return bool(_RFC3339_RE.match(timestamp))


def utc_now_rfc3339() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def canonical_receipt_bytes(vote: bytes, timestamp: str, random_string: str) -> bytes:
    """Frame the digest input as len(vote)||vote||len(ts)||ts||len(rand)||rand
    with 4-byte big-endian lengths. Injective over all inputs."""
    if not isinstance(vote, (bytes, bytearray)):
        raise FormatError("vote must be bytes")
    if not is_rfc3339_utc(timestamp):
        raise FormatError(f"timestamp not RFC-3339 UTC with seconds precision: {timestamp!r}")
    if any(c not in TOKEN_CHARSET for c in random_string):
        raise FormatError("random string outside its charset")
    ts = timestamp.encode("ascii")
    rnd = random_string.encode("ascii")
    return b"".join(
        (
            struct.pack(">I", len(vote)),
            bytes(vote),
            struct.pack(">I", len(ts)),
            ts,
            struct.pack(">I", len(rnd)),
            rnd,
        )
    )


def parse_receipt_bytes(data: bytes) -> tuple[bytes, str, str]:
    """Inverse of canonical_receipt_bytes; raises FormatError on bad framing."""
    fields = []
    offset = 0
    for _ in range(3):
        if offset + 4 > len(data):
            raise FormatError("truncated length prefix")
        (n,) = struct.unpack_from(">I", data, offset)
        offset += 4
        if offset + n > len(data):
            raise FormatError("truncated field")
        fields.append(data[offset : offset + n])
        offset += n
    if offset != len(data):
        raise FormatError("trailing bytes after framed fields")
    vote, ts, rnd = fields
    return bytes(vote), ts.decode("ascii"), rnd.decode("ascii")


def compute_verification_code(vote: bytes, timestamp: str, random_string: str) -> str:
    """Hex digest of the framed triple; recomputable by the voter from the
    receipt fields."""
    return hashlib.sha256(canonical_receipt_bytes(vote, timestamp, random_string)).hexdigest()


def canonical_json(obj: Any) -> str:
    """Stable JSON encoding used for every signed/encrypted record payload."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --- voter password storage -------------------------------------------------

def hash_password(password: str, iterations: int = DEFAULT_KDF_ITERATIONS) -> str:
    import secrets

    salt = secrets.token_bytes(16)
    dk = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return f"pbkdf2-sha256${iterations}${salt.hex()}${dk.hex()}"


def verify_password(password: str, encoded: str) -> bool:
    try:
        scheme, iterations, salt_hex, hash_hex = encoded.split("$")
        if scheme != "pbkdf2-sha256":
            return False
        dk = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), bytes.fromhex(salt_hex), int(iterations)
        )
        return hmac.compare_digest(dk.hex(), hash_hex)
    except (ValueError, TypeError):
        return False
