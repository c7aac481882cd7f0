"""Immutable shard images: canonical build, bit-exact serialization, scan.

File format (line-oriented UTF-8, ``\\n`` terminators):

    FDBSIMG 1
    id <text>
    version <int>
    coverage <canonical coverage expression>
    count <int>
    sha256 <64 hex>
    ---
    postcode<TAB>theme<TAB>lon<TAB>lat<TAB>payload   (count lines, sorted)

The digest covers exactly the bytes after the ``---`` line, so images with
identical data but different versions share a data digest.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .coverage import Coverage, parse_coverage
from .errors import (
    ChecksumMismatch,
    CoverageViolation,
    DuplicateRecord,
    FormatError,
    InvalidCoverage,
    InvalidRecord,
    InvariantViolation,
)
from .records import GeoRecord, QueryPredicate

MAGIC = "FDBSIMG 1"
SOFT_RECORD_CAP = 100_000


class OversizeImageWarning(UserWarning):
    """Image exceeds the portability soft cap; build proceeds anyway."""


@dataclass(frozen=True)
class ShardImage:
    """A checksummed, versioned, canonically sorted bundle of records."""

    image_id: str
    version: int
    coverage: Coverage
    checksum: str
    records: tuple[GeoRecord, ...]

    @property
    def record_count(self) -> int:
        return len(self.records)


def _record_section(records: Sequence[GeoRecord]) -> bytes:
    return "".join(r.to_line() + "\n" for r in records).encode("utf-8")


def build_image(
    records: Iterable[GeoRecord],
    coverage: Coverage,
    version: int,
    image_id: str | None = None,
) -> ShardImage:
    """Build a shard image; pure in (record multiset, coverage, version).

    Records are sorted into canonical (postcode, theme, lon, lat) order, so
    any input ordering of the same multiset produces identical bytes.  When
    ``image_id`` is omitted it is derived from the data digest.
    """
    if not isinstance(version, int) or version < 1:
        raise ValueError(f"version must be a positive integer, got {version!r}")
    ordered = sorted(records, key=lambda r: r.sort_key)
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.sort_key == cur.sort_key:
            raise DuplicateRecord(f"duplicate full key {cur.sort_key}")
    for record in ordered:
        if not coverage.contains(record):
            raise CoverageViolation(f"record {record.to_line()!r} outside coverage {coverage.to_expr()}")
    if len(ordered) > SOFT_RECORD_CAP:
        warnings.warn(
            f"image holds {len(ordered)} records (> soft cap {SOFT_RECORD_CAP}); "
            "consider splitting for portability",
            OversizeImageWarning,
            stacklevel=2,
        )
    checksum = hashlib.sha256(_record_section(ordered)).hexdigest()
    if image_id is None:
        image_id = f"img-{checksum[:12]}"
    if "\n" in image_id or "\t" in image_id or not image_id:
        raise ValueError(f"image_id must be non-empty single-line text, got {image_id!r}")
    return ShardImage(
        image_id=image_id,
        version=version,
        coverage=coverage,
        checksum=checksum,
        records=tuple(ordered),
    )


def serialize_image(image: ShardImage) -> bytes:
    header = (
        f"{MAGIC}\n"
        f"id {image.image_id}\n"
        f"version {image.version}\n"
        f"coverage {image.coverage.to_expr()}\n"
        f"count {image.record_count}\n"
        f"sha256 {image.checksum}\n"
        "---\n"
    )
    return header.encode("utf-8") + _record_section(image.records)


def _header_value(line: str, key: str) -> str:
    prefix = key + " "
    if not line.startswith(prefix):
        raise FormatError(f"expected header {key!r}, got line {line!r}")
    return line[len(prefix) :]


def load_image(data: bytes) -> ShardImage:
    """Parse and fully verify serialized image bytes.

    The digest is recomputed over the raw record section before any record
    parsing, so any corruption after the separator surfaces as
    ChecksumMismatch rather than a parse error.
    """
    head_bytes, sep, section = data.partition(b"---\n")
    if not sep:
        raise FormatError("missing '---' separator line")
    try:
        head = head_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"header not UTF-8: {exc}") from exc
    lines = head.split("\n")
    if len(lines) != 7 or lines[6] != "":
        raise FormatError("header must be exactly six lines before the separator")
    if lines[0] != MAGIC:
        raise FormatError(f"bad magic line {lines[0]!r}")
    image_id = _header_value(lines[1], "id")
    if not image_id:
        raise FormatError("empty image id")
    try:
        version = int(_header_value(lines[2], "version"))
    except ValueError as exc:
        raise FormatError(f"bad version: {exc}") from exc
    if version < 1:
        raise FormatError(f"version must be positive, got {version}")
    try:
        coverage = parse_coverage(_header_value(lines[3], "coverage"))
    except InvalidCoverage as exc:
        raise FormatError(f"bad coverage expression: {exc}") from exc
    try:
        count = int(_header_value(lines[4], "count"))
    except ValueError as exc:
        raise FormatError(f"bad count: {exc}") from exc
    if count < 0:
        raise FormatError(f"negative count {count}")
    checksum = _header_value(lines[5], "sha256")
    if len(checksum) != 64 or any(c not in "0123456789abcdef" for c in checksum):
        raise FormatError(f"sha256 header must be 64 lowercase hex chars, got {checksum!r}")

    actual = hashlib.sha256(section).hexdigest()
    if actual != checksum:
        raise ChecksumMismatch(f"record section digest {actual} != stored {checksum}")
    try:
        body = section.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"record section not UTF-8: {exc}") from exc

    if body and not body.endswith("\n"):
        raise FormatError("record section must end with a newline")
    record_lines = body.split("\n")[:-1] if body else []
    if len(record_lines) != count:
        raise FormatError(f"count header says {count}, found {len(record_lines)} record lines")
    try:
        records = [GeoRecord.from_line(line) for line in record_lines]
    except InvalidRecord as exc:
        raise FormatError(f"bad record line: {exc}") from exc

    for prev, cur in zip(records, records[1:]):
        if prev.sort_key >= cur.sort_key:
            raise InvariantViolation(
                f"records not strictly sorted at {cur.to_line()!r}"
            )
    for record in records:
        if not coverage.contains(record):
            raise InvariantViolation(f"record {record.to_line()!r} outside coverage")

    return ShardImage(
        image_id=image_id,
        version=version,
        coverage=coverage,
        checksum=checksum,
        records=tuple(records),
    )


def scan(
    image: ShardImage,
    pred: QueryPredicate,
    offset: int = 0,
    limit: int | None = None,
) -> list[GeoRecord]:
    """Matching records in canonical order, skipping ``offset`` matches and
    returning at most ``limit``; a pure read, stable across calls."""
    if offset < 0:
        raise ValueError(f"offset must be >= 0, got {offset}")
    if limit is not None and limit < 0:
        raise ValueError(f"limit must be >= 0, got {limit}")
    out: list[GeoRecord] = []
    skipped = 0
    for record in image.records:
        if not pred.matches(record):
            continue
        if skipped < offset:
            skipped += 1
            continue
        if limit is not None and len(out) >= limit:
            break
        out.append(record)
    return out


def count_matches(image: ShardImage, pred: QueryPredicate) -> int:
    if pred.match_all:
        return image.record_count
    return sum(1 for record in image.records if pred.matches(record))
