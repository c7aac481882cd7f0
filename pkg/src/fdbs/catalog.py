"""Service catalog: the discoverable registry of data services.

Each entry records where a service answers queries (a service id routable
through the cluster), what it can answer (capabilities), and which slice of
the data it holds (a canonical coverage expression).  Query planning starts
here: ``resolve`` returns exactly the entries whose coverage intersects a
predicate.  Both leaf shard services and nested federations register the
same way, which is what lets a parent engine treat them identically.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Iterable

from .coverage import Coverage, parse_coverage
from .errors import FormatError, NameConflict
from .records import QueryPredicate

LEAF = "leaf"
FEDERATION = "federation"

CAPABILITIES = frozenset({"records", "count", "groups"})

_EXPORT_HEADER = "name\tservice_id\tkind\tcapabilities\tcoverage"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    service_id: str
    kind: str
    coverage: Coverage
    capabilities: frozenset[str] = CAPABILITIES
    registered_at: int = 0

    def __post_init__(self):
        if not self.name or any(c in self.name for c in "\t\n\r"):
            raise ValueError(f"invalid entry name {self.name!r}")
        if self.kind not in (LEAF, FEDERATION):
            raise ValueError(f"kind must be leaf or federation, got {self.kind!r}")
        unknown = set(self.capabilities) - CAPABILITIES
        if unknown:
            raise ValueError(f"unknown capabilities {sorted(unknown)}")
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))

    def identity(self) -> tuple:
        """Everything that must match for a re-registration to count as
        identical; the logical timestamp is catalog-assigned, not identity."""
        return (self.name, self.service_id, self.kind, self.coverage, self.capabilities)


class Catalog:
    """Read-mostly registry; registrations are serialized and atomically
    visible, resolve/snapshot see consistent states."""

    def __init__(self, entries: Iterable[CatalogEntry] = ()):
        self._lock = threading.Lock()
        self._entries: dict[str, CatalogEntry] = {}
        self._clock = 0
        for entry in entries:
            self.register(entry)

    def register(self, entry: CatalogEntry) -> CatalogEntry:
        with self._lock:
            existing = self._entries.get(entry.name)
            if existing is not None:
                if existing.identity() == entry.identity():
                    return existing
                raise NameConflict(f"catalog already holds a different entry named {entry.name!r}")
            self._clock += 1
            stamped = replace(entry, registered_at=self._clock)
            self._entries[entry.name] = stamped
            return stamped

    def get(self, name: str) -> CatalogEntry | None:
        with self._lock:
            return self._entries.get(name)

    def resolve(self, pred: QueryPredicate) -> list[CatalogEntry]:
        """Entries whose coverage intersects the predicate, by name order."""
        with self._lock:
            entries = sorted(self._entries.values(), key=lambda e: e.name)
        return [e for e in entries if e.coverage.intersects(pred)]

    def snapshot(self) -> list[CatalogEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.name)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    # --- text export (used by the topology CLI and bootstrap files) ---

    def export_text(self) -> str:
        lines = [_EXPORT_HEADER]
        for entry in self.snapshot():
            lines.append(
                "\t".join(
                    (
                        entry.name,
                        entry.service_id,
                        entry.kind,
                        ",".join(sorted(entry.capabilities)),
                        entry.coverage.to_expr(),
                    )
                )
            )
        return "\n".join(lines) + "\n"


def import_text(text: str) -> Catalog:
    lines = text.splitlines()
    if not lines or lines[0] != _EXPORT_HEADER:
        raise FormatError("catalog document must start with the standard header line")
    catalog = Catalog()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise FormatError(f"line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
        name, service_id, kind, caps, expr = fields
        catalog.register(
            CatalogEntry(
                name=name,
                service_id=service_id,
                kind=kind,
                coverage=parse_coverage(expr),
                capabilities=frozenset(caps.split(",")) if caps else frozenset(),
            )
        )
    return catalog
