import pytest
from hypothesis import given, settings, strategies as st

from fdbs import GeoRecord, generate_records, partition_by_cuboid, partition_by_prefix
from fdbs.errors import InvalidPrefixLen
from fdbs.partition import cell_for


def _check_total(buckets, records, owner):
    # completeness: every record lands somewhere; disjointness: exactly once
    total = sum(len(v) for v in buckets.values())
    assert total == len(records)
    for key, members in buckets.items():
        for r in members:
            assert owner(key, r), (key, r)


@pytest.mark.parametrize("prefix_len", [1, 2, 5])
def test_prefix_partition_is_total_and_disjoint(prefix_len):
    records = generate_records(2000, seed=3)
    buckets = partition_by_prefix(records, prefix_len)
    _check_total(buckets, records, lambda key, r: r.postcode[:prefix_len] == key)
    assert all(len(k) == prefix_len for k in buckets)


def test_prefix_partition_rejects_bad_lengths():
    for bad in (0, 6, -1, "2", 2.0):
        with pytest.raises(InvalidPrefixLen):
            partition_by_prefix([], bad)


def test_prefix_partition_preserves_input_order_within_bucket():
    records = generate_records(500, seed=9)
    buckets = partition_by_prefix(records, 1)
    for key, members in buckets.items():
        expected = [r for r in records if r.postcode.startswith(key)]
        assert members == expected


@pytest.mark.parametrize("cell_deg", [5.0, 15.0, 45.0])
def test_cuboid_partition_is_total_and_disjoint(cell_deg):
    records = generate_records(2000, seed=4, themes=("a", "b"))
    buckets = partition_by_cuboid(records, cell_deg)
    _check_total(
        buckets, records, lambda cell, r: cell.contains(r.lon, r.lat, r.theme)
    )


def test_cuboid_partition_rejects_nonpositive_cell():
    with pytest.raises(ValueError):
        partition_by_cuboid([], 0.0)


def test_cell_assignment_is_deterministic_and_theme_aware():
    a = GeoRecord("11111", "x", 3.0, 4.0)
    b = GeoRecord("22222", "y", 3.0, 4.0)
    buckets = partition_by_cuboid([a, b], 10.0)
    assert len(buckets) == 2  # same cell geometry, different themes
    cells = sorted(buckets, key=lambda c: c.theme)
    assert cells[0].theme == "x" and cells[1].theme == "y"
    assert cells[0].lon_min == 0.0 and cells[0].lat_min == 0.0


def test_cell_boundaries_are_half_open():
    cell = cell_for(10.0, 0.0, "t", 10.0, (0.0, 0.0))
    assert cell.lon_min == 10.0  # boundary point belongs to the upper cell
    below = cell_for(9.999999, 0.0, "t", 10.0, (0.0, 0.0))
    assert below.lon_max == 10.0


def test_pole_points_fall_in_the_top_cell():
    cell = cell_for(0.0, 90.0, "t", 10.0, (0.0, 0.0))
    assert cell.lat_min == 80.0 and cell.lat_max == 90.0
    assert cell.contains(0.0, 90.0, "t")
    # a whole dataset on the pole line still partitions totally
    records = [GeoRecord(f"{i:05d}", "t", float(i), 90.0) for i in range(50)]
    buckets = partition_by_cuboid(records, 30.0)
    _check_total(buckets, records, lambda cell, r: cell.contains(r.lon, r.lat, r.theme))


def test_origin_shifts_the_grid():
    on_origin = cell_for(3.0, 4.0, "t", 10.0, (0.0, 0.0))
    shifted = cell_for(3.0, 4.0, "t", 10.0, (-5.0, -5.0))
    assert on_origin.lon_min == 0.0
    assert shifted.lon_min == -5.0 and shifted.lon_max == 5.0


@settings(max_examples=200)
@given(
    st.floats(min_value=-180.0, max_value=179.999999),
    st.floats(min_value=-90.0, max_value=90.0),
    st.sampled_from([1.0, 7.5, 30.0, 90.0]),
)
def test_every_point_gets_exactly_one_cell(lon, lat, cell_deg):
    record = GeoRecord("12345", "t", lon, lat)
    cell = cell_for(record.lon, record.lat, "t", cell_deg, (0.0, 0.0))
    assert cell.contains(record.lon, record.lat, "t")
    # neighbours do not also claim it
    import dataclasses

    for d_lon in (-cell_deg, cell_deg):
        neighbour = dataclasses.replace(
            cell, lon_min=cell.lon_min + d_lon, lon_max=cell.lon_max + d_lon
        )
        assert not neighbour.contains(record.lon, record.lat, "t")
