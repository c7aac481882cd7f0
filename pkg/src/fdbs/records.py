"""Geospatial record model and query predicates.

Coordinates are canonically quantized to 6 decimal places (micro-degrees) at
construction so that serialized text, in-memory floats, and exact integer
aggregation all agree on one value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InvalidPredicate, InvalidRecord

LON_MIN, LON_MAX = -180.0, 180.0
LAT_MIN, LAT_MAX = -90.0, 90.0

_POSTCODE_RE = re.compile(r"^[0-9]{5}$")
_PREFIX_RE = re.compile(r"^[0-9]{1,5}$")


def quantize(value: float) -> float:
    """Round to the canonical 6-decimal grid (the value ``%.6f`` prints)."""
    q = float(f"{value:.6f}")
    return 0.0 if q == 0 else q


def coord_text(value: float) -> str:
    """Fixed 6-decimal text form used in files and record payloads."""
    return f"{value:.6f}"


def micro(value: float) -> int:
    """Quantized coordinate as an exact integer count of micro-degrees."""
    return round(value * 1_000_000)


def micro_text(m: int) -> str:
    """Render a micro-degree integer as 6-decimal text without float rounding."""
    sign = "-" if m < 0 else ""
    m = abs(m)
    return f"{sign}{m // 1_000_000}.{m % 1_000_000:06d}"


def parse_micro(text: str) -> int:
    """Parse 6-decimal text into exact micro-degrees."""
    whole, _, frac = text.partition(".")
    frac = (frac + "000000")[:6]
    neg = whole.startswith("-")
    m = abs(int(whole)) * 1_000_000 + int(frac or 0)
    return -m if neg else m


@dataclass(frozen=True, order=True)
class GeoRecord:
    """One themed geospatial row: the unit of storage and retrieval.

    Field order doubles as the canonical sort key via ``sort_key``.
    """

    postcode: str
    theme: str
    lon: float
    lat: float
    payload: str = ""

    def __post_init__(self):
        if not _POSTCODE_RE.match(self.postcode):
            raise InvalidRecord(f"postcode must be exactly five digits, got {self.postcode!r}")
        if not self.theme:
            raise InvalidRecord("theme must be non-empty")
        for name in ("theme", "payload"):
            value = getattr(self, name)
            if "\t" in value or "\n" in value or "\r" in value:
                raise InvalidRecord(f"{name} may not contain tabs or line breaks")
        object.__setattr__(self, "lon", quantize(self.lon))
        object.__setattr__(self, "lat", quantize(self.lat))
        if not (LON_MIN <= self.lon < LON_MAX):
            raise InvalidRecord(f"lon {self.lon} outside [{LON_MIN}, {LON_MAX})")
        if not (LAT_MIN <= self.lat <= LAT_MAX):
            raise InvalidRecord(f"lat {self.lat} outside [{LAT_MIN}, {LAT_MAX}]")

    @property
    def sort_key(self) -> tuple[str, str, float, float]:
        return (self.postcode, self.theme, self.lon, self.lat)

    @property
    def lon_micro(self) -> int:
        return micro(self.lon)

    @property
    def lat_micro(self) -> int:
        return micro(self.lat)

    def to_line(self) -> str:
        return "\t".join(
            (self.postcode, self.theme, coord_text(self.lon), coord_text(self.lat), self.payload)
        )

    @classmethod
    def from_line(cls, line: str) -> "GeoRecord":
        parts = line.split("\t")
        if len(parts) != 5:
            raise InvalidRecord(f"expected 5 tab-separated fields, got {len(parts)}")
        postcode, theme, lon_s, lat_s, payload = parts
        try:
            lon, lat = float(lon_s), float(lat_s)
        except ValueError as exc:
            raise InvalidRecord(f"bad coordinate text: {exc}") from exc
        return cls(postcode=postcode, theme=theme, lon=lon, lat=lat, payload=payload)


def validate_prefix(prefix: str, error=InvalidPredicate) -> str:
    if not _PREFIX_RE.match(prefix):
        raise error(f"prefix must be 1-5 digits, got {prefix!r}")
    return prefix


@dataclass(frozen=True)
class QueryPredicate:
    """Conjunctive filter: prefix AND bbox AND theme, each optional.

    ``bbox`` is (lon_min, lon_max, lat_min, lat_max), half-open on both axes
    with the single exception that lat_max = 90 also matches lat = 90, the
    same boundary convention used by grid cells.
    """

    prefix: str | None = None
    bbox: tuple[float, float, float, float] | None = None
    theme: str | None = None
    match_all: bool = False

    def __post_init__(self):
        fields_set = [f for f in (self.prefix, self.bbox, self.theme) if f is not None]
        if self.match_all and fields_set:
            raise InvalidPredicate("match_all predicate must not constrain any field")
        if not self.match_all and not fields_set:
            raise InvalidPredicate("predicate needs at least one field or the match_all flag")
        if self.prefix is not None:
            validate_prefix(self.prefix)
        if self.theme is not None and not self.theme:
            raise InvalidPredicate("theme constraint must be non-empty")
        if self.bbox is not None:
            bbox = tuple(float(v) for v in self.bbox)
            if len(self.bbox) != 4:
                raise InvalidPredicate("bbox must have 4 components")
            lon_min, lon_max, lat_min, lat_max = bbox
            if not (lon_min < lon_max and lat_min < lat_max):
                raise InvalidPredicate("bbox must satisfy lon_min < lon_max and lat_min < lat_max")
            object.__setattr__(self, "bbox", bbox)

    @classmethod
    def all(cls) -> "QueryPredicate":
        return cls(match_all=True)

    def matches(self, record: GeoRecord) -> bool:
        if self.match_all:
            return True
        if self.prefix is not None and not record.postcode.startswith(self.prefix):
            return False
        if self.theme is not None and record.theme != self.theme:
            return False
        if self.bbox is not None:
            lon_min, lon_max, lat_min, lat_max = self.bbox
            if not (lon_min <= record.lon < lon_max):
                return False
            lat_ok = lat_min <= record.lat < lat_max or (lat_max == LAT_MAX and record.lat == LAT_MAX)
            if not lat_ok:
                return False
        return True

    def params(self) -> dict[str, str]:
        """Flat query-parameter form used on the wire and in traces."""
        out: dict[str, str] = {}
        if self.prefix is not None:
            out["prefix"] = self.prefix
        if self.theme is not None:
            out["theme"] = self.theme
        if self.bbox is not None:
            out["bbox"] = ",".join(repr(v) if v != int(v) else str(int(v)) for v in self.bbox)
        return out
