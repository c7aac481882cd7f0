"""Federation query engine: resolves targets through the catalog, plans
splits with the cost model, scatter-gathers sub-queries through the cluster's
service routing, and merges results.

The engine itself answers the standard query surface (records/count/groups),
so an engine can stand behind a service and act as a child of another engine;
composition nests to any depth and a parent cannot tell a federation from a
leaf shard.
"""

from __future__ import annotations

import heapq
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Iterable, Sequence

from .catalog import FEDERATION, Catalog, CatalogEntry
from .cluster import Cluster, ServiceSpec
from .costmodel import CostModel, default_cost_model, lookup_best
from .coverage import Coverage
from .distill import GroupAggregate, merge_aggregates
from .errors import (
    FdbsError,
    InvalidSpec,
    NoCoverage,
    PartialFailure,
    UnreachableChild,
)
from .records import GeoRecord, QueryPredicate

DEFAULT_FAN_OUT = 16

MERGE_CONCAT_SORTED = "concat_sorted"
MERGE_SUM_COUNTS = "sum_counts"
MERGE_GROUP_AGGREGATES = "merge_group_aggregates"

_MERGE_FOR_KIND = {
    "records": MERGE_CONCAT_SORTED,
    "count": MERGE_SUM_COUNTS,
    "groups": MERGE_GROUP_AGGREGATES,
}


@dataclass(frozen=True)
class RangeSlice:
    """Half-open ordinal range [start, stop) into a target's canonical order."""

    start: int
    stop: int

    def __post_init__(self):
        if self.start < 0 or self.stop < self.start:
            raise ValueError(f"bad range slice [{self.start}, {self.stop})")

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class PlanTarget:
    entry: CatalogEntry
    sub_predicate: QueryPredicate
    slices: tuple[RangeSlice, ...]
    estimated_rows: int

    @property
    def parallelism(self) -> int:
        return len(self.slices)


@dataclass(frozen=True)
class QueryPlan:
    kind: str
    predicate: QueryPredicate
    targets: tuple[PlanTarget, ...]
    merge: str
    estimated_rows: int

    def __post_init__(self):
        for target in self.targets:
            covered = 0
            for s in target.slices:
                if s.start != covered:
                    raise InvalidSpec("range slices must tile [0, estimated_rows)")
                covered = s.stop
            if covered != target.estimated_rows:
                raise InvalidSpec("range slices must cover the estimated rows exactly")


def split_rows(rows: int, parallelism: int) -> tuple[RangeSlice, ...]:
    """Equal contiguous slices of [0, rows); the remainder goes to the last."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if rows == 0 or parallelism == 1:
        return (RangeSlice(0, rows),)
    width = rows // parallelism
    if width == 0:
        return (RangeSlice(0, rows),)
    slices = []
    for i in range(parallelism):
        start = i * width
        stop = rows if i == parallelism - 1 else start + width
        slices.append(RangeSlice(start, stop))
    return tuple(slices)


class Engine:
    """One federation level.  Holds no per-query mutable state; safe for
    concurrent external queries."""

    def __init__(
        self,
        catalog: Catalog,
        cluster: Cluster,
        cost_model: CostModel | None = None,
        fan_out: int = DEFAULT_FAN_OUT,
        retry: bool = True,
        strict: bool = False,
        name: str = "federation",
    ):
        if fan_out < 1:
            raise InvalidSpec("fan_out must be >= 1")
        self.catalog = catalog
        self.cluster = cluster
        self.cost_model = cost_model if cost_model is not None else default_cost_model()
        self.retry = retry
        self.strict = strict
        self.name = name
        self._pool = ThreadPoolExecutor(max_workers=fan_out, thread_name_prefix=f"{name}-q")

    # --- dispatch through the cluster ---

    def _call(self, entry: CatalogEntry, op: str, *args, **kwargs):
        """Route one sub-query: pick an address for the entry's service, look
        up whatever serves it, invoke; one retry re-routes (a fresh route may
        land on a different replica)."""
        attempts = 2 if self.retry else 1
        last: Exception | None = None
        for _ in range(attempts):
            try:
                address = self.cluster.route(entry.service_id)
                self.cluster.begin_request(address)
                try:
                    target = self.cluster.target_at(address)
                    return getattr(target, op)(*args, **kwargs)
                finally:
                    self.cluster.end_request(address)
            except FdbsError as exc:
                last = exc
        raise last

    def resolve(self, pred: QueryPredicate) -> list[CatalogEntry]:
        targets = self.catalog.resolve(pred)
        if not targets and self.strict:
            raise NoCoverage(f"no registered coverage intersects {pred!r}")
        return targets

    # --- planning ---

    def precount(self, pred: QueryPredicate, targets: Sequence[CatalogEntry]) -> dict[str, int]:
        """Exact per-target matching-record counts (the SELECT COUNT() pass
        that precedes planning; its cost is part of every measured query)."""
        futures = {
            entry.name: self._pool.submit(self._call, entry, "count", pred)
            for entry in targets
        }
        return {name: future.result() for name, future in futures.items()}

    def plan(
        self,
        kind: str,
        pred: QueryPredicate,
        force_parallelism: int | None = None,
    ) -> QueryPlan:
        if kind not in _MERGE_FOR_KIND:
            raise InvalidSpec(f"unknown query kind {kind!r}")
        targets = self.resolve(pred)
        for entry in targets:
            if kind not in entry.capabilities:
                raise InvalidSpec(f"entry {entry.name!r} cannot answer {kind!r} queries")
        counts = self.precount(pred, targets)
        plan_targets = []
        for entry in targets:
            rows = counts[entry.name]
            if kind == "records":
                parallelism = (
                    force_parallelism
                    if force_parallelism is not None
                    else lookup_best(self.cost_model, rows)
                )
            else:
                parallelism = 1
            plan_targets.append(
                PlanTarget(
                    entry=entry,
                    sub_predicate=pred,
                    slices=split_rows(rows, parallelism),
                    estimated_rows=rows,
                )
            )
        return QueryPlan(
            kind=kind,
            predicate=pred,
            targets=tuple(plan_targets),
            merge=_MERGE_FOR_KIND[kind],
            estimated_rows=sum(counts.values()),
        )

    # --- execution ---

    def execute(self, plan: QueryPlan, prefix_len: int | None = None):
        """Scatter sub-queries (bounded fan-out), gather, merge per plan."""
        jobs = []  # (target, slice, future)
        futures = []
        for target in plan.targets:
            for s in target.slices:
                if plan.kind == "records":
                    future = self._pool.submit(
                        self._call, target.entry, "records",
                        target.sub_predicate, s.start, s.length,
                    )
                elif plan.kind == "count":
                    future = self._pool.submit(self._call, target.entry, "count", target.sub_predicate)
                else:
                    future = self._pool.submit(
                        self._call, target.entry, "groups", target.sub_predicate, prefix_len
                    )
                jobs.append((target, s, future))
                futures.append(future)
        if self.retry:
            wait(futures)
        else:
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            failed = next((f for f in done if f.exception() is not None), None)
            if failed is not None:
                for p in pending:
                    p.cancel()
        failures = []
        results = []
        for target, s, future in jobs:
            if future.cancelled():
                failures.append((target.entry.name, (s.start, s.length), "cancelled"))
                continue
            exc = future.exception()
            if exc is not None:
                failures.append((target.entry.name, (s.start, s.length), str(exc)))
            else:
                results.append((target, s, future.result()))
        if failures:
            raise PartialFailure(failures)

        if plan.merge == MERGE_SUM_COUNTS:
            return sum(r for _, _, r in results)
        if plan.merge == MERGE_GROUP_AGGREGATES:
            return tuple(merge_aggregates(r for _, _, r in results))
        per_target: dict[str, list[tuple[RangeSlice, tuple[GeoRecord, ...]]]] = {}
        for target, s, records in results:
            per_target.setdefault(target.entry.name, []).append((s, records))
        runs = []
        for name in sorted(per_target):
            pieces = sorted(per_target[name], key=lambda item: item[0].start)
            run: list[GeoRecord] = []
            for _, records in pieces:
                run.extend(records)
            runs.append(run)
        return tuple(heapq.merge(*runs))

    # --- the standard query surface (same shape a leaf shard answers) ---

    def records(
        self,
        pred: QueryPredicate,
        offset: int = 0,
        limit: int | None = None,
        force_parallelism: int | None = None,
    ) -> tuple[GeoRecord, ...]:
        if offset < 0:
            raise ValueError(f"offset must be >= 0, got {offset}")
        if limit is not None and limit < 0:
            raise ValueError(f"limit must be >= 0, got {limit}")
        plan = self.plan("records", pred, force_parallelism=force_parallelism)
        merged = self.execute(plan)
        stop = None if limit is None else offset + limit
        return tuple(merged[offset:stop])

    def count(self, pred: QueryPredicate) -> int:
        return self.execute(self.plan("count", pred))

    def groups(self, pred: QueryPredicate, prefix_len: int) -> tuple[GroupAggregate, ...]:
        return self.execute(self.plan("groups", pred), prefix_len=prefix_len)


def probe_target(cluster: Cluster, endpoint: str):
    """Reachability probe used at federation time: the endpoint must resolve
    to something that answers the standard query surface."""
    try:
        target = cluster.target_at(endpoint)
    except FdbsError as exc:
        raise UnreachableChild(f"endpoint {endpoint!r} did not resolve: {exc}") from exc
    for op in ("records", "count", "groups"):
        if not callable(getattr(target, op, None)):
            raise UnreachableChild(f"endpoint {endpoint!r} does not answer {op!r}")
    return target


def federate(
    parent_catalog: Catalog,
    cluster: Cluster,
    name: str,
    child_endpoint: str,
    declared_coverage: Coverage,
    service_id: str | None = None,
) -> CatalogEntry:
    """Mount a child federation (or any standard-query endpoint) into a
    parent catalog behind an external-endpoint service."""
    probe_target(cluster, child_endpoint)
    svc_id = service_id if service_id is not None else f"svc-{name}"
    cluster.apply_service(ServiceSpec(service_id=svc_id, external_endpoint=child_endpoint))
    return parent_catalog.register(
        CatalogEntry(
            name=name,
            service_id=svc_id,
            kind=FEDERATION,
            coverage=declared_coverage,
        )
    )
