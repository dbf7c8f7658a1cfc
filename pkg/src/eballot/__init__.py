"""Small-scale verifiable ballot system: one-time tokens, enveloped
authorizations, write-once vote storage, sealed servers, signed receipts."""

from .ballot import (
    BallotConfig,
    BallotDefinition,
    BallotManifest,
    BallotPaths,
    ReissueMode,
    TokenBinding,
    setup_ballot,
)
from .credentials import (
    CredentialKind,
    canonical_receipt_bytes,
    compute_verification_code,
    generate_credential,
    generate_pin,
    validate,
)
from .envelope import (
    DetachedSignature,
    Envelope,
    ManagerIdentity,
    PassphraseMode,
    Role,
    decrypt_verify,
    detached_sign,
    digest,
    fingerprint_of,
    generate_identity,
    load_identity,
    load_public_key,
    save_identity,
    sign_encrypt,
    verify_detached,
)
from .errors import (
    AlreadyExists,
    AuthorizationUsed,
    BadCredentials,
    BadEnvelope,
    BadManifestSignature,
    BadUnsealToken,
    DecryptError,
    EballotError,
    EnvelopeError,
    FormatError,
    FrozenViolation,
    IntegrityAlarm,
    IntegrityError,
    InvalidChoice,
    InvalidName,
    KeyUnavailable,
    NotFound,
    NotOpen,
    PinMismatch,
    SealViolation,
    ServiceError,
    SignerMismatch,
    StrengthError,
    TokenInvalid,
    TokenNotBound,
    TokenUsed,
    UpstreamUnreachable,
    WormError,
)
from .sealing import (
    AuditLog,
    GuardRules,
    IntegrityManifest,
    IntegrityReport,
    SealController,
    SealState,
    baseline,
    verify_baseline,
)
from .worm import CompletionJournal, WormStore

__version__ = "0.1.0"

__all__ = [
    "AlreadyExists",
    "AuditLog",
    "AuthorizationUsed",
    "BadCredentials",
    "BadEnvelope",
    "BadManifestSignature",
    "BadUnsealToken",
    "BallotConfig",
    "BallotDefinition",
    "BallotManifest",
    "BallotPaths",
    "CompletionJournal",
    "CredentialKind",
    "DecryptError",
    "DetachedSignature",
    "EballotError",
    "Envelope",
    "EnvelopeError",
    "FormatError",
    "FrozenViolation",
    "GuardRules",
    "IntegrityAlarm",
    "IntegrityError",
    "IntegrityManifest",
    "IntegrityReport",
    "InvalidChoice",
    "InvalidName",
    "KeyUnavailable",
    "ManagerIdentity",
    "NotFound",
    "NotOpen",
    "PassphraseMode",
    "PinMismatch",
    "ReissueMode",
    "Role",
    "SealController",
    "SealState",
    "SealViolation",
    "ServiceError",
    "SignerMismatch",
    "StrengthError",
    "TokenBinding",
    "TokenInvalid",
    "TokenNotBound",
    "TokenUsed",
    "UpstreamUnreachable",
    "WormError",
    "WormStore",
    "baseline",
    "canonical_receipt_bytes",
    "compute_verification_code",
    "decrypt_verify",
    "detached_sign",
    "digest",
    "fingerprint_of",
    "generate_credential",
    "generate_identity",
    "generate_pin",
    "load_identity",
    "load_public_key",
    "save_identity",
    "setup_ballot",
    "sign_encrypt",
    "validate",
    "verify_baseline",
    "verify_detached",
    "__version__",
]
