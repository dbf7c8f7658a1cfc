"""Deterministic signed archives: the artifact equivalent of the record CDs
handed between officials.

Archives are plain USTAR tars with sorted members, zeroed ownership, fixed
mode and a fixed mtime, so exporting the same directories twice yields
byte-identical files. Each archive gets a detached signature alongside it.
"""

from __future__ import annotations

import io
import tarfile
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import rsa

from .envelope import (
    DetachedSignature,
    ManagerIdentity,
    detached_sign,
    digest,
    verify_detached,
)
from .errors import BadManifestSignature, FormatError

ARCHIVE_MTIME = 946684800  # matches the flattened record mtime


def _member(name: str, size: int, is_dir: bool = False) -> tarfile.TarInfo:
    info = tarfile.TarInfo(name)
    info.size = size
    info.mtime = ARCHIVE_MTIME
    info.uid = 0
    info.gid = 0
    info.uname = ""
    info.gname = ""
    if is_dir:
        info.type = tarfile.DIRTYPE
        info.mode = 0o755
    else:
        info.mode = 0o644
    return info


def write_archive(
    output_path: Path, directories: dict[str, Path], signer: ManagerIdentity
) -> str:
    """Pack the committed records of each directory under its prefix, sign the
    result, and return the archive digest."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for prefix in sorted(directories):
            src = Path(directories[prefix])
            tar.addfile(_member(f"{prefix}/", 0, is_dir=True))
            for entry in sorted(src.iterdir()):
                if not entry.is_file():
                    continue
                data = entry.read_bytes()
                if not data:
                    continue  # in-flight claim, not a committed record
                tar.addfile(_member(f"{prefix}/{entry.name}", len(data)), io.BytesIO(data))
    blob = buf.getvalue()
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_bytes(blob)
    signature = detached_sign(blob, signer)
    output_path.with_name(output_path.name + ".sig").write_bytes(signature.to_bytes())
    return digest(blob)


def read_archive(
    path: Path, signer_public: rsa.RSAPublicKey | None = None
) -> dict[str, dict[str, bytes]]:
    """Load an archive as {prefix: {name: content}}. When a public key is
    given, the detached signature must exist and verify."""
    path = Path(path)
    blob = path.read_bytes()
    if signer_public is not None:
        sig_path = path.with_name(path.name + ".sig")
        try:
            signature = DetachedSignature.from_bytes(sig_path.read_bytes())
        except OSError as e:
            raise BadManifestSignature(f"missing archive signature: {sig_path}") from e
        if not verify_detached(blob, signature, signer_public):
            raise BadManifestSignature(f"archive signature does not verify: {path}")
    out: dict[str, dict[str, bytes]] = {}
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r") as tar:
        for member in tar.getmembers():
            if member.isdir():
                out.setdefault(member.name.rstrip("/"), {})
                continue
            if not member.isfile():
                raise FormatError(f"unexpected archive member type: {member.name}")
            prefix, _, name = member.name.partition("/")
            if not name:
                raise FormatError(f"archive member outside a directory: {member.name}")
            reader = tar.extractfile(member)
            assert reader is not None
            out.setdefault(prefix, {})[name] = reader.read()
    return out
