"""
FirmCast - Artifact Helpers

Hashing and JSON helpers for params files, model files and run manifests.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict

logger = logging.getLogger(__name__)


def sha256_bytes(data: bytes) -> str:
    """Hex SHA-256 of a byte string."""
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: str | Path) -> str:
    """
    Hash a file's contents.

    Args:
        path: File to hash

    Returns:
        Hex SHA-256 digest
    """
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json(path: str | Path, payload: Dict[str, Any]) -> Path:
    """
    Write a JSON document with stable key order.

    Args:
        path: Destination file
        payload: JSON-serializable mapping

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: str | Path) -> Dict[str, Any]:
    """Read a JSON document."""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def directory_checksums(root: str | Path) -> Dict[str, str]:
    """
    Hash every file under a directory.

    Args:
        root: Directory to walk

    Returns:
        Mapping of relative path to SHA-256
    """
    root = Path(root)
    return {
        str(p.relative_to(root)): file_sha256(p)
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }
