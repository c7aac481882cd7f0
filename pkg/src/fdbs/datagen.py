"""Deterministic synthetic datasets standing in for a national postcode set.

Coordinates are drawn directly on the 6-decimal grid (integer micro-degrees)
so generated values are exactly representable in the record line format, and
full record keys are deduplicated so any partitioning of one dataset builds
valid images without duplicate-key collisions.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError
from .records import GeoRecord

DATASET_HEADER = "postcode\ttheme\tlon\tlat\tpayload"

DEFAULT_THEMES = ("postcode",)


def generate_records(
    count: int,
    seed: int = 0,
    themes: Sequence[str] = DEFAULT_THEMES,
    lon_range: tuple[float, float] = (-180.0, 180.0),
    lat_range: tuple[float, float] = (-90.0, 90.0),
) -> list[GeoRecord]:
    """``count`` records fully determined by ``seed``; unique on the full
    record key (postcode, theme, lon, lat)."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if not themes:
        raise ValueError("need at least one theme")
    rng = random.Random(seed)
    lon_lo, lon_hi = (round(v * 1_000_000) for v in lon_range)
    lat_lo, lat_hi = (round(v * 1_000_000) for v in lat_range)
    lon_hi = min(lon_hi, 180_000_000) - 1  # lon upper bound is exclusive
    lat_hi = min(lat_hi, 90_000_000)
    seen: set[tuple] = set()
    records: list[GeoRecord] = []
    while len(records) < count:
        postcode = f"{rng.randrange(100_000):05d}"
        theme = rng.choice(themes)
        lon = rng.randint(lon_lo, lon_hi) / 1_000_000
        lat = rng.randint(lat_lo, lat_hi) / 1_000_000
        key = (postcode, theme, lon, lat)
        if key in seen:
            continue
        seen.add(key)
        records.append(
            GeoRecord(
                postcode=postcode,
                theme=theme,
                lon=lon,
                lat=lat,
                payload=f"site-{len(records):06d}",
            )
        )
    return records


def write_dataset(records: Iterable[GeoRecord], path: str | Path) -> Path:
    """One header line, then one record line per record (the shard-image body
    format)."""
    path = Path(path)
    lines = [DATASET_HEADER]
    lines.extend(record.to_line() for record in records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_dataset(path: str | Path) -> list[GeoRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != DATASET_HEADER:
        raise FormatError(f"dataset must start with header {DATASET_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            records.append(GeoRecord.from_line(line))
        except Exception as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return records
