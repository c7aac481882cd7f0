import random

import pytest
from hypothesis import given, strategies as st

from fdbs import Coverage, Cuboid, GeoRecord, QueryPredicate, parse_coverage
from fdbs.errors import InvalidCoverage

from .conftest import random_predicate
from .oracles import resolve_names


class _Entry:
    def __init__(self, name, coverage):
        self.name = name
        self.coverage = coverage


def test_cuboid_validation():
    with pytest.raises(InvalidCoverage):
        Cuboid("t", 5.0, 5.0, 0.0, 1.0)
    with pytest.raises(InvalidCoverage):
        Cuboid("t", 0.0, 1.0, 3.0, 2.0)
    with pytest.raises(InvalidCoverage):
        Cuboid("", 0.0, 1.0, 0.0, 1.0)


def test_cuboid_contains_is_half_open_with_lat_90_closure():
    c = Cuboid("t", 0.0, 10.0, 80.0, 90.0)
    assert c.contains(0.0, 80.0, "t")
    assert not c.contains(10.0, 85.0, "t")
    assert c.contains(5.0, 90.0, "t")  # pole line belongs to the top cell
    assert not c.contains(5.0, 85.0, "other")


def test_cuboid_overlap_requires_same_theme():
    a = Cuboid("t", 0.0, 10.0, 0.0, 10.0)
    b = Cuboid("u", 5.0, 15.0, 5.0, 15.0)
    assert not a.overlaps(b)
    assert a.overlaps(Cuboid("t", 9.0, 11.0, 9.0, 11.0))
    assert not a.overlaps(Cuboid("t", 10.0, 11.0, 0.0, 10.0))  # edge-adjacent


def test_top_row_cells_share_only_the_pole_line():
    # both close at 90, so both hold lat=90 points: that counts as overlap
    a = Cuboid("t", 0.0, 10.0, 80.0, 90.0)
    b = Cuboid("t", 0.0, 10.0, 85.0, 90.0)
    assert a.overlaps(b)


def test_prefix_coverage_rejects_nested_prefixes():
    with pytest.raises(InvalidCoverage):
        Coverage.from_prefixes(["4", "41"])
    Coverage.from_prefixes(["4", "5", "61"])  # disjoint is fine


def test_cuboid_coverage_rejects_overlaps():
    with pytest.raises(InvalidCoverage):
        Coverage.from_cuboids(
            [Cuboid("t", 0.0, 10.0, 0.0, 10.0), Cuboid("t", 5.0, 15.0, 0.0, 10.0)]
        )


@pytest.mark.parametrize(
    "cov",
    [
        Coverage.from_prefixes(["40", "41", "5"]),
        Coverage.from_cuboids(
            [Cuboid("t", -10.0, 0.0, 0.0, 45.0), Cuboid("t", 0.0, 10.0, 0.0, 45.0)]
        ),
        Coverage.union_of(
            [
                Coverage.from_prefixes(["1"]),
                Coverage.from_cuboids([Cuboid("u", 0.5, 1.5, -2.25, 3.0)]),
            ]
        ),
    ],
)
def test_expression_round_trip(cov):
    assert parse_coverage(cov.to_expr()) == cov
    # canonical: round-tripping the text reproduces it byte for byte
    assert parse_coverage(cov.to_expr()).to_expr() == cov.to_expr()


def test_expression_parse_errors():
    for bad in ["", "prefix", "blob:1", "cuboid:theme=t;lon=1,2", "union:(prefix:1", "union:junk"]:
        with pytest.raises(InvalidCoverage):
            parse_coverage(bad)


def test_contains_walks_unions():
    cov = Coverage.union_of(
        [
            Coverage.from_prefixes(["4"]),
            Coverage.from_cuboids([Cuboid("amenity", 0.0, 1.0, 0.0, 1.0)]),
        ]
    )
    assert cov.contains(GeoRecord("40000", "postcode", 50.0, 50.0))
    assert cov.contains(GeoRecord("90000", "amenity", 0.5, 0.5))
    assert not cov.contains(GeoRecord("90000", "postcode", 0.5, 0.5))


# --- intersects: never prune a shard that could hold a match ---


def _random_coverage(rng: random.Random) -> Coverage:
    if rng.random() < 0.5:
        width = rng.choice([1, 1, 2])
        starts = rng.sample(range(10 ** width), k=rng.randint(1, 3))
        return Coverage.from_prefixes([f"{s:0{width}d}" for s in starts])
    lon0 = rng.uniform(-170, 60)
    lat0 = rng.uniform(-85, 70)
    cells = []
    for i in range(rng.randint(1, 3)):
        # stack side by side so they never overlap
        cells.append(
            Cuboid(rng.choice(["postcode", "amenity"]), lon0 + 40 * i, lon0 + 40 * i + 10, lat0, lat0 + 10)
        )
    return Coverage.from_cuboids(cells)


def test_intersects_is_sound_for_contained_records():
    # any record inside the coverage that matches the predicate forces
    # intersects() to say yes — resolve must never prune such a shard
    rng = random.Random(7)
    from fdbs import generate_records

    records = generate_records(400, seed=11, themes=("postcode", "amenity"))
    for _ in range(300):
        cov = _random_coverage(rng)
        pred = random_predicate(rng, records, themes=("postcode", "amenity"))
        for r in records:
            if cov.contains(r) and pred.matches(r):
                assert cov.intersects(pred), (cov.to_expr(), pred)
                break


def test_intersects_agrees_with_rederived_logic():
    rng = random.Random(13)
    entries = [_Entry(f"e{i}", _random_coverage(rng)) for i in range(40)]
    for _ in range(300):
        pred = random_predicate(rng, themes=("postcode", "amenity"))
        got = sorted(e.name for e in entries if e.coverage.intersects(pred))
        assert got == resolve_names(entries, pred)


def test_prefix_coverage_ignores_geometry_and_theme():
    cov = Coverage.from_prefixes(["4"])
    assert cov.intersects(QueryPredicate(bbox=(0.0, 1.0, 0.0, 1.0)))
    assert cov.intersects(QueryPredicate(theme="anything"))
    assert cov.intersects(QueryPredicate(prefix="41"))
    assert not cov.intersects(QueryPredicate(prefix="5"))


def test_cuboid_coverage_ignores_postcodes():
    cov = Coverage.from_cuboids([Cuboid("postcode", 0.0, 1.0, 0.0, 1.0)])
    assert cov.intersects(QueryPredicate(prefix="99999"))
    assert not cov.intersects(QueryPredicate(theme="amenity"))
    assert not cov.intersects(QueryPredicate(bbox=(2.0, 3.0, 0.0, 1.0)))


def test_pole_bbox_intersects_top_cells():
    cov = Coverage.from_cuboids([Cuboid("t", 0.0, 10.0, 80.0, 90.0)])
    # bbox strictly above the cell except for the shared closed pole line
    assert cov.intersects(QueryPredicate(bbox=(0.0, 10.0, 89.999999, 90.0), theme="t"))


@given(st.integers(min_value=0, max_value=99999), st.integers(min_value=1, max_value=5))
def test_prefix_intersection_matches_string_compatibility(n, length):
    cov = Coverage.from_prefixes(["427"])
    q = f"{n:05d}"[:length]
    expected = q.startswith("427") or "427".startswith(q)
    assert cov.intersects(QueryPredicate(prefix=q)) == expected
