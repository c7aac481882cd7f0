"""Coverage metadata: which slice of the record space a shard holds.

Three kinds: a set of postcode prefixes, a set of geographic grid cells
crossed with themes ("cuboids"), or a union of other coverages.  Every
coverage has one canonical text form so that serialized images, catalog
exports, and bootstrap files are byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .errors import InvalidCoverage
from .records import LAT_MAX, GeoRecord, validate_prefix

PREFIX = "prefix"
CUBOID = "cuboid"
UNION = "union"


def _interval_overlap(a1: float, b1: float, a2: float, b2: float) -> bool:
    return a1 < b2 and a2 < b1


def _lat_contains(lat_min: float, lat_max: float, lat: float) -> bool:
    # half-open, except an interval closing at 90 also holds the pole line
    return lat_min <= lat < lat_max or (lat_max == LAT_MAX and lat == LAT_MAX)


def _lat_overlap(a1: float, b1: float, a2: float, b2: float) -> bool:
    if _interval_overlap(a1, b1, a2, b2):
        return True
    return _lat_contains(a1, b1, LAT_MAX) and _lat_contains(a2, b2, LAT_MAX)


def _num(value: float) -> str:
    v = float(value)
    return str(int(v)) if v == int(v) else repr(v)


@dataclass(frozen=True, order=True)
class Cuboid:
    """One grid cell crossed with one theme; lon/lat intervals half-open
    (lat_max = 90 closed)."""

    theme: str
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self):
        if not self.theme:
            raise InvalidCoverage("cuboid theme must be non-empty")
        if not (self.lon_min < self.lon_max):
            raise InvalidCoverage(f"cuboid needs lon_min < lon_max, got {self.lon_min}, {self.lon_max}")
        if not (self.lat_min < self.lat_max):
            raise InvalidCoverage(f"cuboid needs lat_min < lat_max, got {self.lat_min}, {self.lat_max}")

    def contains(self, lon: float, lat: float, theme: str) -> bool:
        return (
            theme == self.theme
            and self.lon_min <= lon < self.lon_max
            and _lat_contains(self.lat_min, self.lat_max, lat)
        )

    def overlaps(self, other: "Cuboid") -> bool:
        return (
            self.theme == other.theme
            and _interval_overlap(self.lon_min, self.lon_max, other.lon_min, other.lon_max)
            and _lat_overlap(self.lat_min, self.lat_max, other.lat_min, other.lat_max)
        )

    def to_expr(self) -> str:
        return (
            f"theme={self.theme};lon={_num(self.lon_min)},{_num(self.lon_max)};"
            f"lat={_num(self.lat_min)},{_num(self.lat_max)}"
        )

    @classmethod
    def from_expr(cls, text: str) -> "Cuboid":
        fields_seen: dict[str, str] = {}
        for part in text.split(";"):
            key, eq, value = part.partition("=")
            if not eq or key in fields_seen:
                raise InvalidCoverage(f"bad cuboid expression: {text!r}")
            fields_seen[key] = value
        if set(fields_seen) != {"theme", "lon", "lat"}:
            raise InvalidCoverage(f"cuboid expression needs theme/lon/lat: {text!r}")
        try:
            lon_min, lon_max = (float(v) for v in fields_seen["lon"].split(","))
            lat_min, lat_max = (float(v) for v in fields_seen["lat"].split(","))
        except ValueError as exc:
            raise InvalidCoverage(f"bad cuboid bounds in {text!r}: {exc}") from exc
        return cls(fields_seen["theme"], lon_min, lon_max, lat_min, lat_max)


@dataclass(frozen=True)
class Coverage:
    kind: str
    prefixes: frozenset[str] = frozenset()
    cuboids: frozenset[Cuboid] = frozenset()
    parts: frozenset["Coverage"] = frozenset()

    def __post_init__(self):
        if self.kind == PREFIX:
            if self.cuboids or self.parts:
                raise InvalidCoverage("prefix coverage carries only prefixes")
            for p in self.prefixes:
                validate_prefix(p, error=InvalidCoverage)
            ordered = sorted(self.prefixes)
            for i, p in enumerate(ordered):
                for q in ordered[i + 1 :]:
                    if q.startswith(p):
                        raise InvalidCoverage(f"nested prefixes {p!r} and {q!r}")
        elif self.kind == CUBOID:
            if self.prefixes or self.parts:
                raise InvalidCoverage("cuboid coverage carries only cuboids")
            ordered_c = sorted(self.cuboids)
            for i, c in enumerate(ordered_c):
                for d in ordered_c[i + 1 :]:
                    if c.overlaps(d):
                        raise InvalidCoverage(f"overlapping cuboids {c.to_expr()} and {d.to_expr()}")
        elif self.kind == UNION:
            if self.prefixes or self.cuboids:
                raise InvalidCoverage("union coverage carries only parts")
        else:
            raise InvalidCoverage(f"unknown coverage kind {self.kind!r}")

    # --- constructors ---

    @classmethod
    def from_prefixes(cls, prefixes: Iterable[str]) -> "Coverage":
        return cls(kind=PREFIX, prefixes=frozenset(prefixes))

    @classmethod
    def from_cuboids(cls, cuboids: Iterable[Cuboid]) -> "Coverage":
        return cls(kind=CUBOID, cuboids=frozenset(cuboids))

    @classmethod
    def union_of(cls, parts: Iterable["Coverage"]) -> "Coverage":
        return cls(kind=UNION, parts=frozenset(parts))

    # --- membership ---

    def contains(self, record: GeoRecord) -> bool:
        if self.kind == PREFIX:
            return any(record.postcode.startswith(p) for p in self.prefixes)
        if self.kind == CUBOID:
            return any(c.contains(record.lon, record.lat, record.theme) for c in self.cuboids)
        return any(part.contains(record) for part in self.parts)

    # --- predicate intersection ---

    def intersects(self, pred) -> bool:
        """True when this coverage could hold a record matching ``pred``.

        A coverage constrains only its own axes: a prefix coverage says
        nothing about themes or coordinates, so predicates on those axes
        never exclude it, and vice versa for cuboids and postcodes.
        """
        if pred.match_all:
            return True
        if self.kind == PREFIX:
            if pred.prefix is None:
                return True
            return any(
                p.startswith(pred.prefix) or pred.prefix.startswith(p) for p in self.prefixes
            )
        if self.kind == CUBOID:
            return any(self._cuboid_matches(c, pred) for c in self.cuboids)
        return any(part.intersects(pred) for part in self.parts)

    @staticmethod
    def _cuboid_matches(c: Cuboid, pred) -> bool:
        if pred.theme is not None and pred.theme != c.theme:
            return False
        if pred.bbox is not None:
            lon_min, lon_max, lat_min, lat_max = pred.bbox
            if not _interval_overlap(c.lon_min, c.lon_max, lon_min, lon_max):
                return False
            if not _lat_overlap(c.lat_min, c.lat_max, lat_min, lat_max):
                return False
        return True

    # --- canonical expression ---

    def to_expr(self) -> str:
        if self.kind == PREFIX:
            return "prefix:" + ",".join(sorted(self.prefixes))
        if self.kind == CUBOID:
            return "cuboid:" + "|".join(c.to_expr() for c in sorted(self.cuboids))
        inner = sorted(part.to_expr() for part in self.parts)
        return "union:" + "+".join(f"({e})" for e in inner)


def parse_coverage(text: str) -> Coverage:
    kind, sep, rest = text.partition(":")
    if not sep:
        raise InvalidCoverage(f"coverage expression needs a kind prefix: {text!r}")
    if kind == PREFIX:
        prefixes = [p for p in rest.split(",") if p] if rest else []
        return Coverage.from_prefixes(prefixes)
    if kind == CUBOID:
        cuboids = [Cuboid.from_expr(part) for part in rest.split("|")] if rest else []
        return Coverage.from_cuboids(cuboids)
    if kind == UNION:
        return Coverage.union_of(parse_coverage(part) for part in _split_union(rest, text))
    raise InvalidCoverage(f"unknown coverage kind {kind!r}")


def _split_union(rest: str, whole: str) -> list[str]:
    """Split ``(...)+(...)`` into inner expressions, honoring nested parens."""
    parts: list[str] = []
    depth = 0
    start = None
    for i, ch in enumerate(rest):
        if ch == "(":
            if depth == 0:
                start = i + 1
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise InvalidCoverage(f"unbalanced parens in {whole!r}")
            if depth == 0:
                parts.append(rest[start:i])
                start = None
        elif depth == 0 and ch != "+":
            raise InvalidCoverage(f"unexpected {ch!r} at top level of {whole!r}")
    if depth != 0:
        raise InvalidCoverage(f"unbalanced parens in {whole!r}")
    if not parts and rest:
        raise InvalidCoverage(f"empty union body in {whole!r}")
    return parts
