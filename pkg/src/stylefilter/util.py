"""Small shared helpers: hashing, seed derivation, atomic file writes."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

_SEED_MASK = (1 << 63) - 1


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path, chunk_size: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def derive_seed(base_seed: int, *tokens: object) -> int:
    """Stable sub-seed from a master seed and a label path.

    Hash-based so the result does not depend on platform integer width or
    on how many other sub-seeds were drawn before this one.
    """
    h = hashlib.sha256()
    h.update(str(int(base_seed)).encode())
    for tok in tokens:
        h.update(b"\x1f")
        h.update(str(tok).encode())
    return int.from_bytes(h.digest()[:8], "little") & _SEED_MASK


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
