import random

from fdbs import (
    Coverage,
    QueryPredicate,
    ShardBackend,
    aggregate_records,
    build_image,
    generate_records,
)

from .conftest import random_predicate
from .oracles import brute_count, brute_group_sums, brute_records

ALL = Coverage.from_prefixes([str(d) for d in range(10)])


def make_backend(count=600, seed=12, version=1):
    records = generate_records(count, seed=seed, themes=("a", "b"))
    image = build_image(records, ALL, version=version, image_id="img")
    return ShardBackend(image), records


def test_backend_answers_all_three_query_kinds():
    backend, records = make_backend()
    rng = random.Random(1)
    for _ in range(40):
        pred = random_predicate(rng, records, themes=("a", "b"))
        assert backend.records(pred) == brute_records(records, pred)
        assert backend.count(pred) == brute_count(records, pred)
        got = backend.groups(pred, 2)
        assert [
            (a.prefix, a.count, a.sum_lon_micro, a.sum_lat_micro) for a in got
        ] == brute_group_sums(records, pred, 2)


def test_backend_paging_matches_slice_semantics():
    backend, records = make_backend()
    pred = QueryPredicate.all()
    full = backend.records(pred)
    assert backend.records(pred, offset=10, limit=25) == full[10:35]
    assert backend.records(pred, offset=len(full)) == []
    assert backend.records(pred, limit=0) == []


def test_backend_groups_agree_with_direct_aggregation():
    backend, records = make_backend()
    assert backend.groups(QueryPredicate.all(), 1) == aggregate_records(records, 1)


def test_image_version_is_surfaced():
    backend, _ = make_backend(version=7)
    assert backend.image_version == 7
