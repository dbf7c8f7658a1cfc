"""Write-once record areas with atomic claims and flattened file metadata.

A record is committed by first claiming its final name with O_CREAT|O_EXCL
(the claim is an empty file, so exactly one concurrent writer wins), then
writing the content to a scratch file whose inode comes from a pre-created
pool, and renaming that over the claim. Readers treat empty files as
in-flight, not committed. Because the inode is taken from a shuffled pool
and every committed file gets the same fixed mtime, neither inode numbers
nor timestamps reveal the order in which records arrived.
"""

from __future__ import annotations

import os
import re
import secrets
import threading
from pathlib import Path

from .errors import AlreadyExists, InvalidName, NotFound, WormError

FIXED_MTIME = 946684800.0  # 2000-01-01T00:00:00Z

_NAME_RE = re.compile(r"^[A-Za-z0-9_.@-]{1,128}$")
_POOL_DIR = ".pool"
_RESERVED_NAMES = {".", "..", _POOL_DIR}


class WormStore:
    """One write-once area: a directory of immutable, named records."""

    def __init__(
        self,
        path: Path,
        fixed_mtime: float = FIXED_MTIME,
        pool_size: int = 64,
        allow_purge: bool = False,
    ):
        self.path = Path(path)
        self.fixed_mtime = float(fixed_mtime)
        self.pool_size = int(pool_size)
        self.allow_purge = bool(allow_purge)
        self._pool = self.path / _POOL_DIR
        self._pool.mkdir(parents=True, exist_ok=True)
        if not any(e.name.startswith("p-") for e in os.scandir(self._pool)):
            self._refill_pool()

    # --- helpers ---

    def _refill_pool(self) -> None:
        for _ in range(self.pool_size):
            name = self._pool / f"p-{secrets.token_hex(8)}"
            try:
                fd = os.open(name, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
            except FileExistsError:
                continue
            os.close(fd)

    def _take_pool_file(self, dest: Path) -> None:
        # Claim a random pooled inode; losers of the rename race retry.
        while True:
            entries = [e for e in os.listdir(self._pool) if e.startswith("p-")]
            if not entries:
                self._refill_pool()
                continue
            pick = self._pool / secrets.choice(entries)
            try:
                os.rename(pick, dest)
                return
            except FileNotFoundError:
                continue

    @staticmethod
    def _check_name(name: str) -> None:
        if not isinstance(name, str) or not _NAME_RE.fullmatch(name):
            raise InvalidName(f"invalid record name: {name!r}")
        if name in _RESERVED_NAMES:
            raise InvalidName(f"reserved record name: {name!r}")

    # --- operations ---

    def create_exclusive(self, name: str, content: bytes) -> None:
        """Commit `content` under `name`; a second create of the same name
        fails with AlreadyExists no matter how the calls interleave."""
        self._check_name(name)
        if not content:
            raise WormError("empty content cannot be committed")
        final = self.path / name
        try:
            fd = os.open(final, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
        except FileExistsError:
            raise AlreadyExists(f"record already exists: {name}") from None
        os.close(fd)
        scratch = self._pool / f"tmp-{secrets.token_hex(8)}"
        self._take_pool_file(scratch)
        try:
            with open(scratch, "wb") as f:
                f.write(content)
                f.flush()
                os.fsync(f.fileno())
            os.rename(scratch, final)
            os.utime(final, (self.fixed_mtime, self.fixed_mtime))
        except OSError:
            scratch.unlink(missing_ok=True)
            raise

    def exists(self, name: str) -> bool:
        self._check_name(name)
        try:
            return (self.path / name).stat().st_size > 0
        except OSError:
            return False

    def read(self, name: str) -> bytes:
        self._check_name(name)
        try:
            content = (self.path / name).read_bytes()
        except OSError:
            raise NotFound(f"no record named {name}") from None
        if not content:
            raise NotFound(f"record {name} is not committed")
        return content

    def list_names(self) -> list[str]:
        names = []
        for entry in os.scandir(self.path):
            if not entry.is_file():
                continue
            if entry.stat().st_size > 0:
                names.append(entry.name)
        return sorted(names)

    def count(self) -> int:
        return len(self.list_names())

    def purge_all(self) -> int:
        """Remove every record. Allowed only for areas built with
        allow_purge=True (temporary copies, wiped when the ballot closes)."""
        if not self.allow_purge:
            raise WormError(f"purge not allowed for {self.path.name}")
        removed = 0
        for entry in os.scandir(self.path):
            if entry.name == _POOL_DIR:
                continue
            if entry.is_file():
                os.unlink(entry.path)
                removed += 1
        return removed


class CompletionJournal:
    """Append-only file of digests marking multi-record operations that fully
    committed. A record whose digest is absent after a restart was written by
    an operation that crashed midway and needs reconciliation. Only digests
    are stored, so the journal links nothing."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> set[str]:
        try:
            return set(self.path.read_text().split())
        except OSError:
            return set()

    def append(self, digest_hex: str) -> None:
        with self._lock:
            with open(self.path, "a") as f:
                f.write(digest_hex + "\n")
                f.flush()
