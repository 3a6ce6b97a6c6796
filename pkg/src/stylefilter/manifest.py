"""Dataset manifests: one record per image, one file per domain.

File format (UTF-8, line-delimited)::

    SFMANIFEST v1 domain=<source|target> checksum=<hex64> created_at=<iso8601>
    id<TAB>path<TAB>width<TAB>height<TAB>tag1,tag2,...

The checksum is the SHA-256 of the record lines (each terminated by a
newline), so edits to the body are detected on read. ``created_at`` rides
in the header so a round-trip reproduces the manifest exactly.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from .errors import ManifestError
from .util import atomic_write_text

log = logging.getLogger(__name__)

MAGIC = "SFMANIFEST"
VERSION = "v1"

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"

    @property
    def id_prefix(self) -> str:
        return "src" if self is Domain.SOURCE else "tgt"


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: str
    domain: Domain
    class_tags: tuple[str, ...] = ()
    width: int = 0
    height: int = 0

    def validate(self) -> None:
        if not self.id:
            raise ManifestError("record id must be non-empty")
        if not self.path:
            raise ManifestError(f"record {self.id!r}: path must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ManifestError(
                f"record {self.id!r}: width/height must be >= 1 "
                f"(got {self.width}x{self.height})"
            )
        for piece in (self.id, self.path, *self.class_tags):
            if "\t" in piece or "\n" in piece:
                raise ManifestError(
                    f"record {self.id!r}: tabs/newlines not allowed in fields"
                )
        for tag in self.class_tags:
            if "," in tag:
                raise ManifestError(
                    f"record {self.id!r}: commas not allowed inside a class tag"
                )


@dataclass(frozen=True)
class Manifest:
    domain: Domain
    records: tuple[ImageRecord, ...]
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    checksum: str = ""

    def __post_init__(self):
        if not self.checksum:
            object.__setattr__(self, "checksum", records_checksum(self.records))

    def validate(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            rec.validate()
            if rec.domain != self.domain:
                raise ManifestError(
                    f"record {rec.id!r} has domain {rec.domain.value!r}, "
                    f"manifest is {self.domain.value!r}"
                )
            if rec.id in seen:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        expected = records_checksum(self.records)
        if self.checksum != expected:
            raise ManifestError("manifest corrupted: checksum mismatch")

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]


def _record_line(rec: ImageRecord) -> str:
    tags = ",".join(rec.class_tags)
    return f"{rec.id}\t{rec.path}\t{rec.width}\t{rec.height}\t{tags}"


def records_checksum(records: tuple[ImageRecord, ...]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(_record_line(rec).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class Rejection:
    path: str
    reason: str


def probe_image(path: Path) -> tuple[int, int]:
    """Return (width, height) of a decodable image, raising on failure."""
    with Image.open(path) as img:
        img.load()
        return img.width, img.height


def build_manifest(
    root_dir: str | Path,
    domain: Domain,
    glob: str = "**/*.png",
    *,
    rejections: list[Rejection] | None = None,
) -> Manifest:
    """Enumerate images under ``root_dir`` into a manifest.

    Ids are zero-padded ordinals of the lexicographic relative-path order,
    so two machines enumerating the same tree agree. Files matching the
    glob that fail to decode are reported (via the optional ``rejections``
    collector and a warning log), never silently dropped.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ManifestError(f"no such directory: {root}")
    matches = sorted(
        (p for p in root.glob(glob) if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    records: list[ImageRecord] = []
    for path in matches:
        rel = path.relative_to(root).as_posix()
        try:
            width, height = probe_image(path)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            log.warning("rejecting %s: %s", path, exc)
            if rejections is not None:
                rejections.append(Rejection(path=rel, reason=str(exc)))
            continue
        records.append(
            ImageRecord(
                id=f"{domain.id_prefix}-{len(records):06d}",
                path=rel,
                domain=domain,
                width=width,
                height=height,
            )
        )
    if not records:
        raise ManifestError(f"no images found under {root} matching {glob!r}")
    manifest = Manifest(domain=domain, records=tuple(records))
    manifest.validate()
    return manifest


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    manifest.validate()
    created = manifest.created_at.astimezone(timezone.utc).isoformat()
    header = (
        f"{MAGIC} {VERSION} domain={manifest.domain.value} "
        f"checksum={manifest.checksum} created_at={created}"
    )
    body = "".join(_record_line(r) + "\n" for r in manifest.records)
    atomic_write_text(path, header + "\n" + body)


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest file")
    fields = lines[0].split()
    if len(fields) < 4 or fields[0] != MAGIC or fields[1] != VERSION:
        raise ManifestError(f"{path}: not a {MAGIC} {VERSION} file")
    header: dict[str, str] = {}
    for token in fields[2:]:
        key, _, value = token.partition("=")
        header[key] = value
    try:
        domain = Domain(header["domain"])
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{path}: bad or missing domain in header") from exc
    if "checksum" not in header:
        raise ManifestError(f"{path}: missing checksum in header")
    created_at = _EPOCH
    if "created_at" in header:
        try:
            created_at = datetime.fromisoformat(header["created_at"])
        except ValueError as exc:
            raise ManifestError(f"{path}: bad created_at in header") from exc

    records: list[ImageRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ManifestError(f"{path}:{lineno}: expected 5 tab-separated fields")
        rid, rpath, w, h, tags = parts
        try:
            width, height = int(w), int(h)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: bad width/height") from exc
        records.append(
            ImageRecord(
                id=rid,
                path=rpath,
                domain=domain,
                class_tags=tuple(t for t in tags.split(",") if t),
                width=width,
                height=height,
            )
        )
    manifest = Manifest(
        domain=domain,
        records=tuple(records),
        created_at=created_at,
        checksum=header["checksum"],
    )
    if manifest.checksum != records_checksum(manifest.records):
        raise ManifestError(f"{path}: manifest corrupted: checksum mismatch")
    manifest.validate()
    return manifest


def strip_timestamp(manifest: Manifest) -> Manifest:
    """Copy with a fixed timestamp, for equality checks 'bar timestamp'."""
    return replace(manifest, created_at=_EPOCH)
