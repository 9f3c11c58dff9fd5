"""Canonical JSON serialization, content digests, and write-once artifact files.

Every artifact this package writes must be byte-deterministic: same inputs and
config produce the same bytes. JSON is therefore always emitted with sorted
keys and ASCII escapes, and floats go through ``repr`` (17 significant digits).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import ArtifactError


def canonical_json_bytes(obj: Any) -> bytes:
    """Compact, key-sorted JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("utf-8")


def artifact_json_bytes(obj: Any) -> bytes:
    """Indented, key-sorted JSON used for artifact files on disk."""
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n").encode("utf-8")


def sha256_of_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def sha256_of_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def config_hash(obj: Any, length: int = 12) -> str:
    """Short stable hash used to name output directories."""
    return hashlib.sha256(canonical_json_bytes(obj)).hexdigest()[:length]


def write_bytes_once(path: str | Path, data: bytes) -> bool:
    """Write ``data`` to ``path`` unless an identical file already exists.

    Returns True when the file was written. An existing file with different
    content is never overwritten; that raises ArtifactError instead.
    """
    path = Path(path)
    if path.exists():
        if path.read_bytes() == data:
            return False
        raise ArtifactError(f"refusing to overwrite {path} with different content")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return True


def write_artifact(path: str | Path, obj: Any) -> bool:
    return write_bytes_once(path, artifact_json_bytes(obj))


def read_artifact(path: str | Path) -> Any:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ArtifactError(f"artifact not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"artifact {path} is not valid JSON: {exc}") from exc
