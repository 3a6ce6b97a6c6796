"""Binary style-cache file.

Layout (little-endian)::

    magic        10 bytes  b"SFSTYLE v1"
    fingerprint  32 bytes
    count        u64
    dim          u32
    per record:  id_len u16, id bytes (UTF-8), dim * f32

A text sidecar ``<cache>.idx`` maps id -> byte offset for tooling.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import ExtractorError
from ..util import atomic_write_bytes, atomic_write_text
from .types import StyleVectorSet

MAGIC = b"SFSTYLE v1"
FINGERPRINT_LEN = 32


def write_cache(path: str | Path, sset: StyleVectorSet) -> None:
    if len(sset.fingerprint) != FINGERPRINT_LEN:
        raise ExtractorError("fingerprint must be 32 bytes")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(sset.fingerprint)
    buf.write(struct.pack("<QI", len(sset.ids), sset.dim))
    offsets: list[tuple[str, int]] = []
    vectors = np.ascontiguousarray(sset.vectors, dtype="<f4")
    for i, rid in enumerate(sset.ids):
        offsets.append((rid, buf.tell()))
        encoded = rid.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(vectors[i].tobytes())
    atomic_write_bytes(path, buf.getvalue())
    atomic_write_text(
        str(path) + ".idx",
        "".join(f"{rid}\t{off}\n" for rid, off in offsets),
    )


def read_cache_header(path: str | Path) -> tuple[bytes, int, int]:
    """Return (fingerprint, count, dim) without loading the vectors."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + FINGERPRINT_LEN + 12)
    if len(head) < len(MAGIC) + FINGERPRINT_LEN + 12 or not head.startswith(MAGIC):
        raise ExtractorError(f"{path}: not a {MAGIC.decode()} cache file")
    fingerprint = head[len(MAGIC):len(MAGIC) + FINGERPRINT_LEN]
    count, dim = struct.unpack_from("<QI", head, len(MAGIC) + FINGERPRINT_LEN)
    return fingerprint, count, dim


def read_cache(path: str | Path) -> StyleVectorSet:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ExtractorError(f"{path}: not a {MAGIC.decode()} cache file")
    pos = len(MAGIC)
    fingerprint = data[pos:pos + FINGERPRINT_LEN]
    pos += FINGERPRINT_LEN
    count, dim = struct.unpack_from("<QI", data, pos)
    pos += 12
    ids: list[str] = []
    vectors = np.empty((count, dim), dtype=np.float32)
    rec_bytes = 4 * dim
    for i in range(count):
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        ids.append(data[pos:pos + id_len].decode("utf-8"))
        pos += id_len
        vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += rec_bytes
    if pos != len(data):
        raise ExtractorError(f"{path}: trailing bytes, cache truncated or corrupt")
    return StyleVectorSet(fingerprint=fingerprint, ids=ids, vectors=vectors)
