"""Exception hierarchy shared by every eballot component."""

from __future__ import annotations


class EballotError(Exception):
    """Base class for all eballot errors."""


class StrengthError(EballotError):
    """Key or credential parameters below the configured security floor."""


class FormatError(EballotError):
    """Malformed wire bytes, timestamps, or credential strings."""


class KeyUnavailable(EballotError):
    """Private key cannot be unlocked (missing passphrase file, stopped agent)."""


# --- envelope / signature failures ---

class EnvelopeError(EballotError):
    """Base class for envelope decryption and verification failures."""


class DecryptError(EnvelopeError):
    """Envelope cannot be decrypted with the supplied recipient key."""


class IntegrityError(DecryptError):
    """Envelope addressed to this recipient but its ciphertext is corrupt."""


class SignerMismatch(EnvelopeError):
    """Decryption succeeded but the embedded signature is wrong or missing."""


# --- write-once store ---

class WormError(EballotError):
    """Base class for write-once store failures."""


class AlreadyExists(WormError):
    """An entry with this name was already committed."""


class NotFound(WormError):
    """No committed entry with this name."""


class InvalidName(WormError):
    """Entry name does not validate for this directory's kind."""


# --- seal / integrity controls ---

class SealViolation(EballotError):
    """Operation forbidden by the current seal state."""


class FrozenViolation(SealViolation):
    """Live transition out of the frozen state."""


class BadUnsealToken(SealViolation):
    """Unseal attempted with an incorrect token."""


class BadManifestSignature(EballotError):
    """Integrity manifest signature does not verify."""


class IntegrityAlarm(EballotError):
    """Hard integrity failure (stored filename disagrees with signed content)."""


# --- service-level domain errors ---

class ServiceError(EballotError):
    """Base class for voter-facing request failures; `code` names the wire shape."""

    code = "service_error"


class NotOpen(ServiceError):
    """Voting is not open (server not sealed, or election over)."""

    code = "not_open"


class BadCredentials(ServiceError):
    """Unknown username or wrong password."""

    code = "bad_credentials"


class TokenInvalid(ServiceError):
    """VoteToken fails charset/length checks or is not an issued token."""

    code = "token_invalid"


class TokenUsed(ServiceError):
    """VoteToken was already consumed."""

    code = "token_used"


class TokenNotBound(ServiceError):
    """Strict binding mode: token is not the one assigned to this username."""

    code = "token_not_bound"


class BadEnvelope(ServiceError):
    """VoteAuthorization envelope does not decrypt or has the wrong signer."""

    code = "bad_envelope"


class PinMismatch(ServiceError):
    """Submitted PIN differs from the one sealed in the authorization."""

    code = "pin_mismatch"


class AuthorizationUsed(ServiceError):
    """VoteAuthorization was already consumed."""

    code = "authorization_used"


class InvalidChoice(ServiceError):
    """Submitted vote is not a ballot choice and write-ins are disabled."""

    code = "invalid_choice"


class UpstreamUnreachable(ServiceError):
    """Relay could not reach the upstream vote server."""

    code = "upstream_unreachable"
