"""Election-window integrity: seal states, write guarding, baseline/verify.

The kernel MAC states are emulated in process. A SealController persists one
of three states and every service write is routed through guard_write:

    softmode   writes allowed, would-be violations logged
    enforcing  guarded writes denied; the security officer may change rules
    frozen     guarded writes denied; rules immutable; exit only via a
               restarted controller presenting the unseal token

The audit log is hash-chained: each line embeds the SHA-256 of the previous
line, so rewriting history breaks the chain. Baselines record digest, size
and mode of every file under the guarded roots; verification reports added,
removed and modified paths, with write-once record directories allowlisted
for growth.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import rsa

from .credentials import canonical_json, generate_credential, utc_now_rfc3339
from .envelope import (
    DetachedSignature,
    ManagerIdentity,
    detached_sign,
    digest,
    verify_detached,
)
from .errors import (
    BadManifestSignature,
    BadUnsealToken,
    FormatError,
    FrozenViolation,
    SealViolation,
)

_EMPTY_DIGEST = digest(b"")


class SealState(str, Enum):
    SOFTMODE = "softmode"
    ENFORCING = "enforcing"
    FROZEN = "frozen"


# --- hash-chained audit log -----------------------------------------------


class AuditLog:
    """Append-only event log where each line carries the digest of its
    predecessor (the first line chains from the digest of the empty string)."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._prev = self._tail_digest()

    def _tail_digest(self) -> str:
        try:
            lines = self.path.read_bytes().splitlines()
        except OSError:
            return _EMPTY_DIGEST
        return digest(lines[-1]) if lines else _EMPTY_DIGEST

    def append(self, event: dict) -> None:
        with self._lock:
            line = canonical_json(
                {"prev": self._prev, "time": utc_now_rfc3339(), "event": event}
            ).encode("utf-8")
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as f:
                f.write(line + b"\n")
                f.flush()
            self._prev = digest(line)

    def read_events(self) -> list[dict]:
        try:
            lines = self.path.read_bytes().splitlines()
        except OSError:
            return []
        return [json.loads(line) for line in lines]

    @staticmethod
    def verify_chain(path: Path) -> bool:
        """True iff every line's `prev` equals the digest of the line above."""
        try:
            lines = Path(path).read_bytes().splitlines()
        except OSError:
            return True
        prev = _EMPTY_DIGEST
        for line in lines:
            try:
                record = json.loads(line)
            except ValueError:
                return False
            if record.get("prev") != prev:
                return False
            prev = digest(line)
        return True


# --- guard rules ------------------------------------------------------------


@dataclass(frozen=True)
class GuardRules:
    """What the seal protects: record dirs grow, logs append, the rest of the
    guarded tree is read-only."""

    worm_dirs: tuple[Path, ...] = ()
    append_logs: tuple[Path, ...] = ()
    readonly_paths: tuple[Path, ...] = ()
    security_officer: str = "security-officer"

    @staticmethod
    def _resolve(paths) -> tuple[Path, ...]:
        return tuple(Path(p).resolve() for p in paths)

    def __post_init__(self):
        object.__setattr__(self, "worm_dirs", self._resolve(self.worm_dirs))
        object.__setattr__(self, "append_logs", self._resolve(self.append_logs))
        object.__setattr__(self, "readonly_paths", self._resolve(self.readonly_paths))

    def category_of(self, path: Path) -> str:
        path = Path(path).resolve()
        for d in self.worm_dirs:
            if path == d or path.is_relative_to(d):
                return "worm"
        for p in self.append_logs:
            if path == p or path.is_relative_to(p):
                return "log"
        for p in self.readonly_paths:
            if path == p or path.is_relative_to(p):
                return "readonly"
        return "unguarded"


@dataclass(frozen=True)
class GuardDecision:
    allowed: bool
    violation: bool
    reason: str


def _would_deny(category: str, operation: str) -> bool:
    if category == "worm":
        return operation != "create"
    if category == "log":
        return operation == "modify"
    if category == "readonly":
        return True
    return False


# --- seal controller ----------------------------------------------------------


class SealController:
    """Persisted three-state seal for one ballot tree.

    `restarted=True` marks a controller created by a fresh process start; it
    is the only kind allowed to leave the frozen state, and then only with
    the unseal token chosen when the seal was applied.
    """

    STATE_FILE = "seal.json"

    def __init__(
        self,
        state_dir: Path,
        rules: GuardRules | None = None,
        audit_log: AuditLog | None = None,
        restarted: bool = False,
    ):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.rules = rules or GuardRules()
        self.audit = audit_log or AuditLog(self.state_dir / "audit.log")
        self.restarted = bool(restarted)
        self._lock = threading.Lock()
        self._state, self._unseal_digest = self._load()

    # --- persistence ---

    def _load(self) -> tuple[SealState, str | None]:
        path = self.state_dir / self.STATE_FILE
        try:
            data = json.loads(path.read_text())
        except OSError:
            return SealState.SOFTMODE, None
        return SealState(data["state"]), data.get("unseal_digest")

    def _save(self) -> None:
        path = self.state_dir / self.STATE_FILE
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            canonical_json(
                {"state": self._state.value, "unseal_digest": self._unseal_digest}
            )
        )
        os.replace(tmp, path)

    # --- state machine ---

    @property
    def state(self) -> SealState:
        return self._state

    def set_state(
        self, target: SealState | str, unseal_token: str | None = None
    ) -> SealState:
        """Transition the seal. Entering frozen always succeeds (the token, if
        given, becomes the unseal token). Leaving frozen needs a restarted
        controller plus the correct token."""
        target = SealState(target)
        with self._lock:
            current = self._state
            if current is SealState.FROZEN and target is not SealState.FROZEN:
                if not self.restarted:
                    raise FrozenViolation(
                        "cannot leave frozen state without a restart"
                    )
                if unseal_token is None or digest(
                    unseal_token.encode("utf-8")
                ) != self._unseal_digest:
                    raise BadUnsealToken("unseal token does not match")
            if target is SealState.FROZEN:
                # Re-sealing while frozen installs the new token too; the
                # printed unseal token must always be the one that works.
                if unseal_token is not None:
                    self._unseal_digest = digest(unseal_token.encode("utf-8"))
                elif self._unseal_digest is None:
                    # Entering frozen is never refused; an auto-generated and
                    # discarded token just makes the seal permanent.
                    self._unseal_digest = digest(
                        generate_credential(length=32).encode("utf-8")
                    )
            self._state = target
            self._save()
            self.audit.append(
                {"kind": "seal_transition", "from": current.value, "to": target.value}
            )
            return self._state

    def seal(self) -> str:
        """Freeze the ballot tree; returns the one-time-shown unseal token."""
        token = generate_credential(length=32)
        self.set_state(SealState.FROZEN, unseal_token=token)
        return token

    # --- write guarding ---

    def guard_write(self, path: Path, principal: str, operation: str) -> GuardDecision:
        """Decide a write. `operation` is create, append or modify; deny is a
        value, never an exception, and every violation is audit-logged."""
        if operation not in ("create", "append", "modify"):
            raise FormatError(f"unknown write operation: {operation!r}")
        category = self.rules.category_of(path)
        offending = _would_deny(category, operation)
        if not offending:
            return GuardDecision(True, False, f"{operation} permitted in {category}")
        if self._state is SealState.SOFTMODE:
            self.audit.append(
                {
                    "kind": "guard_violation",
                    "path": str(path),
                    "principal": principal,
                    "operation": operation,
                    "category": category,
                    "enforced": False,
                }
            )
            return GuardDecision(True, True, f"{operation} on {category} logged only")
        self.audit.append(
            {
                "kind": "guard_deny",
                "path": str(path),
                "principal": principal,
                "operation": operation,
                "category": category,
                "enforced": True,
            }
        )
        return GuardDecision(False, True, f"{operation} on {category} denied")

    def set_rules(self, rules: GuardRules, principal: str) -> None:
        """Replace guard rules: anyone in softmode, only the security officer
        in enforcing, nobody in frozen."""
        with self._lock:
            if self._state is SealState.FROZEN:
                raise FrozenViolation("guard rules are immutable while frozen")
            if (
                self._state is SealState.ENFORCING
                and principal != self.rules.security_officer
            ):
                raise SealViolation(
                    f"only {self.rules.security_officer} may change rules in enforcing"
                )
            self.rules = rules
            self.audit.append({"kind": "rules_changed", "principal": principal})


# --- baseline and verification ------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    digest: str
    size: int
    mode: str


@dataclass
class IntegrityManifest:
    entries: dict[str, ManifestEntry]
    created_at: str
    signed_by: str
    signature: DetachedSignature | None = None

    def to_text(self) -> str:
        lines = [
            "# integrity-manifest v1",
            f"# created_at: {self.created_at}",
            f"# signed_by: {self.signed_by}",
        ]
        for path in sorted(self.entries):
            e = self.entries[path]
            lines.append(f"{e.digest} {e.size} {e.mode} {path}")
        return "\n".join(lines) + "\n"

    def save(self, path: Path) -> None:
        path = Path(path)
        path.write_text(self.to_text())
        if self.signature is not None:
            path.with_suffix(path.suffix + ".sig").write_bytes(
                self.signature.to_bytes()
            )

    @classmethod
    def load(cls, path: Path) -> "IntegrityManifest":
        path = Path(path)
        created_at = ""
        signed_by = ""
        entries: dict[str, ManifestEntry] = {}
        for line in path.read_text().splitlines():
            if line.startswith("# created_at: "):
                created_at = line.split(": ", 1)[1]
            elif line.startswith("# signed_by: "):
                signed_by = line.split(": ", 1)[1]
            elif line.startswith("#") or not line.strip():
                continue
            else:
                dig, size, mode, p = line.split(" ", 3)
                entries[p] = ManifestEntry(dig, int(size), mode)
        sig_path = path.with_suffix(path.suffix + ".sig")
        signature = None
        if sig_path.exists():
            signature = DetachedSignature.from_bytes(sig_path.read_bytes())
        return cls(
            entries=entries,
            created_at=created_at,
            signed_by=signed_by,
            signature=signature,
        )


@dataclass
class IntegrityReport:
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.added or self.removed or self.modified)


def _scan(roots, exclude) -> dict[str, ManifestEntry]:
    exclude = [Path(p).resolve() for p in exclude]
    found: dict[str, ManifestEntry] = {}
    for root in roots:
        root = Path(root).resolve()
        for dirpath, dirnames, filenames in os.walk(root):
            # Inode pools are scratch space, not ballot records.
            dirnames[:] = [d for d in dirnames if d != ".pool"]
            here = Path(dirpath)
            if any(here == x or here.is_relative_to(x) for x in exclude):
                dirnames[:] = []
                continue
            for name in filenames:
                full = here / name
                if any(full == x for x in exclude):
                    continue
                st = full.stat()
                found[str(full)] = ManifestEntry(
                    digest=digest(full.read_bytes()),
                    size=st.st_size,
                    mode=oct(st.st_mode & 0o7777),
                )
    return found


def baseline(
    roots: list[Path], signer: ManagerIdentity, exclude: list[Path] = ()
) -> IntegrityManifest:
    """Record digest, size and mode of every regular file under `roots`."""
    manifest = IntegrityManifest(
        entries=_scan(roots, exclude),
        created_at=utc_now_rfc3339(),
        signed_by=signer.fingerprint,
    )
    manifest.signature = detached_sign(manifest.to_text().encode("utf-8"), signer)
    return manifest


def verify_baseline(
    manifest: IntegrityManifest,
    roots: list[Path],
    signer_public: rsa.RSAPublicKey,
    growth_dirs: list[Path] = (),
    exclude: list[Path] = (),
) -> IntegrityReport:
    """Compare the tree against a signed manifest. New files under
    `growth_dirs` are expected (write-once records); anything else that
    appeared, vanished or changed is reported."""
    if manifest.signature is None or not verify_detached(
        manifest.to_text().encode("utf-8"), manifest.signature, signer_public
    ):
        raise BadManifestSignature("manifest signature does not verify")
    current = _scan(roots, exclude)
    growth = [Path(p).resolve() for p in growth_dirs]
    report = IntegrityReport()
    for path, entry in sorted(manifest.entries.items()):
        now = current.get(path)
        if now is None:
            report.removed.append(path)
        elif (now.digest, now.size, now.mode) != (entry.digest, entry.size, entry.mode):
            report.modified.append(path)
    for path in sorted(current):
        if path in manifest.entries:
            continue
        p = Path(path)
        if any(p.is_relative_to(g) for g in growth):
            continue
        report.added.append(path)
    return report
