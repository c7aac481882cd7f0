"""Zoom-dependent postcode grouping, centroids, and k-nearest-neighbour
selection over federated group aggregates.

Aggregates carry coordinate sums as exact micro-degree integers, so merging
per-shard aggregates is associative and lossless: a federation computes the
same centroid bits as a single flat scan, no matter how records are sharded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .records import GeoRecord, QueryPredicate, micro_text, parse_micro

EUCLIDEAN = "euclidean"
HAVERSINE = "haversine"
EARTH_RADIUS_KM = 6371.0088


def prefix_len_for_zoom(zoom: int) -> int:
    """Map a map-widget zoom level to a postcode grouping prefix length."""
    if 1 <= zoom <= 4:
        return 1
    if zoom in (5, 6):
        return 2
    if zoom in (7, 8):
        return 3
    if zoom in (9, 10):
        return 4
    return 5


@dataclass(frozen=True)
class GroupAggregate:
    """Per-prefix (count, coordinate sum) pair; mergeable by addition."""

    prefix: str
    count: int
    sum_lon_micro: int
    sum_lat_micro: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"aggregate count must be >= 1, got {self.count}")

    @property
    def sum_lon(self) -> float:
        return self.sum_lon_micro / 1_000_000

    @property
    def sum_lat(self) -> float:
        return self.sum_lat_micro / 1_000_000

    def merged(self, other: "GroupAggregate") -> "GroupAggregate":
        if other.prefix != self.prefix:
            raise ValueError(f"cannot merge aggregates for {self.prefix!r} and {other.prefix!r}")
        return GroupAggregate(
            prefix=self.prefix,
            count=self.count + other.count,
            sum_lon_micro=self.sum_lon_micro + other.sum_lon_micro,
            sum_lat_micro=self.sum_lat_micro + other.sum_lat_micro,
        )

    def centroid(self) -> "Centroid":
        return Centroid(
            prefix=self.prefix,
            lon=self.sum_lon_micro / 1_000_000 / self.count,
            lat=self.sum_lat_micro / 1_000_000 / self.count,
        )

    def wire(self) -> dict:
        """Lossless JSON form; sums as 6-decimal text (exact for sums of
        6-decimal coordinates)."""
        return {
            "count": self.count,
            "prefix": self.prefix,
            "sum_lat": micro_text(self.sum_lat_micro),
            "sum_lon": micro_text(self.sum_lon_micro),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "GroupAggregate":
        return cls(
            prefix=obj["prefix"],
            count=int(obj["count"]),
            sum_lon_micro=parse_micro(obj["sum_lon"]),
            sum_lat_micro=parse_micro(obj["sum_lat"]),
        )


@dataclass(frozen=True)
class Centroid:
    prefix: str
    lon: float
    lat: float


@dataclass(frozen=True)
class KnnQuery:
    """Inputs of the location-identification routine: zoom picks the grouping
    level; k < 0 means grouping mode (address ignored)."""

    zoom: int
    address: tuple[float, float] = (0.0, 0.0)
    k: int = -1


class GroupSource(Protocol):
    """Anything that can answer a grouped-aggregate query: a shard backend or
    a whole federation engine."""

    def groups(self, pred: QueryPredicate, prefix_len: int) -> list[GroupAggregate]: ...


def aggregate_records(records: Iterable[GeoRecord], prefix_len: int) -> list[GroupAggregate]:
    """Group records by postcode prefix; exact sums, sorted by prefix."""
    counts: dict[str, list[int]] = {}
    for record in records:
        acc = counts.setdefault(record.postcode[:prefix_len], [0, 0, 0])
        acc[0] += 1
        acc[1] += record.lon_micro
        acc[2] += record.lat_micro
    return [
        GroupAggregate(prefix=p, count=c, sum_lon_micro=slon, sum_lat_micro=slat)
        for p, (c, slon, slat) in sorted(counts.items())
    ]


def merge_aggregates(groups: Iterable[Iterable[GroupAggregate]]) -> list[GroupAggregate]:
    """Merge per-shard aggregate lists by prefix; sorted by prefix."""
    merged: dict[str, GroupAggregate] = {}
    for batch in groups:
        for agg in batch:
            present = merged.get(agg.prefix)
            merged[agg.prefix] = agg if present is None else present.merged(agg)
    return [merged[p] for p in sorted(merged)]


def group_aggregates(
    source: GroupSource, zoom: int, pred: QueryPredicate | None = None
) -> list[GroupAggregate]:
    """Aggregates at the zoom level's prefix length, from any query source."""
    pred = pred if pred is not None else QueryPredicate.all()
    return source.groups(pred, prefix_len_for_zoom(zoom))


def centroids(
    source: GroupSource, query: KnnQuery, pred: QueryPredicate | None = None
) -> list[Centroid]:
    """Grouping mode (k < 0): one centroid per group, sorted by prefix."""
    if query.k >= 0:
        raise ValueError("grouping mode requires k < 0; use knn() for k >= 0")
    return [agg.centroid() for agg in group_aggregates(source, query.zoom, pred)]


def distance(a: tuple[float, float], b: tuple[float, float], metric: str = EUCLIDEAN) -> float:
    if metric == EUCLIDEAN:
        return math.hypot(a[0] - b[0], a[1] - b[1])
    if metric == HAVERSINE:
        lon1, lat1, lon2, lat2 = map(math.radians, (a[0], a[1], b[0], b[1]))
        h = (
            math.sin((lat2 - lat1) / 2) ** 2
            + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
        )
        return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))
    raise ValueError(f"unknown metric {metric!r}")


def select_nearest(
    cents: Sequence[Centroid],
    address: tuple[float, float],
    k: int,
    metric: str = EUCLIDEAN,
) -> list[Centroid]:
    """The k centroids nearest to address, ascending distance, ties by prefix.

    Taking the k smallest individual distances is the same set as minimizing
    the summed distance over all size-k subsets.
    """
    if k < 0:
        raise ValueError("selection requires k >= 0")
    ranked = sorted(cents, key=lambda c: (distance((c.lon, c.lat), address, metric), c.prefix))
    return ranked[: min(k, len(ranked))]


def knn(
    source: GroupSource,
    query: KnnQuery,
    pred: QueryPredicate | None = None,
    metric: str = EUCLIDEAN,
) -> list[Centroid]:
    """Neighbour mode (k >= 0): nearest centroids to the query address."""
    if query.k < 0:
        raise ValueError("neighbour mode requires k >= 0; use centroids() for k < 0")
    cents = [agg.centroid() for agg in group_aggregates(source, query.zoom, pred)]
    return select_nearest(cents, query.address, query.k, metric)
