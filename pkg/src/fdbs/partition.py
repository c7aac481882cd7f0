"""Partitioning strategies: postcode prefixes and coordinate/theme grid cells.

Both strategies are total: every record lands in exactly one bucket and the
bucket union equals the input.
"""

from __future__ import annotations

import math
from typing import Sequence

from .coverage import Cuboid
from .errors import InvalidPrefixLen
from .records import LAT_MAX, GeoRecord


def partition_by_prefix(
    records: Sequence[GeoRecord], prefix_len: int
) -> dict[str, list[GeoRecord]]:
    """Bucket records by the leading ``prefix_len`` digits of their postcode."""
    if not isinstance(prefix_len, int) or not 1 <= prefix_len <= 5:
        raise InvalidPrefixLen(f"prefix_len must be in 1..5, got {prefix_len!r}")
    buckets: dict[str, list[GeoRecord]] = {}
    for record in records:
        buckets.setdefault(record.postcode[:prefix_len], []).append(record)
    return buckets


def cell_for(
    lon: float, lat: float, theme: str, cell_deg: float, origin: tuple[float, float]
) -> Cuboid:
    """The grid cell × theme holding the point, half-open intervals anchored
    at ``origin``; a point sitting exactly on a cell floor of 90 belongs to
    the cell below (lat_max = 90 closed)."""
    lon0, lat0 = origin
    i = math.floor((lon - lon0) / cell_deg)
    j = math.floor((lat - lat0) / cell_deg)
    if lat == LAT_MAX and lat0 + j * cell_deg == LAT_MAX:
        j -= 1
    return Cuboid(
        theme=theme,
        lon_min=lon0 + i * cell_deg,
        lon_max=lon0 + (i + 1) * cell_deg,
        lat_min=lat0 + j * cell_deg,
        lat_max=lat0 + (j + 1) * cell_deg,
    )


def partition_by_cuboid(
    records: Sequence[GeoRecord],
    cell_deg: float,
    origin: tuple[float, float] = (0.0, 0.0),
) -> dict[Cuboid, list[GeoRecord]]:
    """Bucket records by (grid cell of their coordinates) × (their theme)."""
    if not cell_deg > 0:
        raise ValueError(f"cell_deg must be positive, got {cell_deg!r}")
    buckets: dict[Cuboid, list[GeoRecord]] = {}
    for record in records:
        cell = cell_for(record.lon, record.lat, record.theme, cell_deg, origin)
        buckets.setdefault(cell, []).append(record)
    return buckets
