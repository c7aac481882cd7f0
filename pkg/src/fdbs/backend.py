"""The in-pod query surface: one loaded shard image behind the uniform
records/count/groups API that every data service answers."""

from __future__ import annotations

from typing import Protocol

from .distill import GroupAggregate, aggregate_records
from .image import ShardImage, count_matches, scan
from .records import GeoRecord, QueryPredicate


class QueryTarget(Protocol):
    """The standard query API; leaf shards and nested federations answer it
    identically, which is what lets federations nest transparently."""

    def records(self, pred: QueryPredicate, offset: int = 0, limit: int | None = None) -> list[GeoRecord]: ...

    def count(self, pred: QueryPredicate) -> int: ...

    def groups(self, pred: QueryPredicate, prefix_len: int) -> list[GroupAggregate]: ...


class ShardBackend:
    """Read-only store + access layer over one immutable image."""

    def __init__(self, image: ShardImage):
        self.image = image

    def records(self, pred: QueryPredicate, offset: int = 0, limit: int | None = None) -> list[GeoRecord]:
        return scan(self.image, pred, offset, limit)

    def count(self, pred: QueryPredicate) -> int:
        return count_matches(self.image, pred)

    def groups(self, pred: QueryPredicate, prefix_len: int) -> list[GroupAggregate]:
        matching = (r for r in self.image.records if pred.matches(r))
        return aggregate_records(matching, prefix_len)

    @property
    def image_version(self) -> int:
        return self.image.version
