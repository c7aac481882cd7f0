import random
import re

import pytest

from fdbs import (
    Coverage,
    ImageStore,
    QueryPredicate,
    build_image,
    build_topology,
    generate_records,
    partition_by_prefix,
)

# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the summary
# ---------------------------------------------------------------------------

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_criterion_results: dict[int, tuple[str, str]] = {}
_SEVERITY = {"SKIP": 0, "PASS": 1, "FAIL": 2}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    number, slug = int(match.group(1)), match.group(2).replace("_", " ")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "skipped": "SKIP"}.get(report.outcome, "FAIL")
        previous = _criterion_results.get(number, (slug, "SKIP"))[1]
        if _SEVERITY[outcome] >= _SEVERITY[previous]:
            _criterion_results[number] = (slug, outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_criterion_results):
        slug, outcome = _criterion_results[number]
        terminalreporter.write_line(f"criterion {number}: {outcome} - {slug}")


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------

THEMES = ("postcode", "amenity", "transit")


@pytest.fixture(scope="session")
def dataset_10k():
    return generate_records(10_000, seed=42, themes=THEMES)


def digit_images(records, version=1, id_prefix="img"):
    """Ten shard images, one per leading postcode digit."""
    buckets = partition_by_prefix(records, 1)
    store = ImageStore()
    for digit in "0123456789":
        image = build_image(
            buckets.get(digit, []),
            Coverage.from_prefixes([digit]),
            version=version,
            image_id=f"{id_prefix}-{digit}",
        )
        store.register(image)
    return store


def flat_topology(records, seed=0, cost_model=None):
    """One federation over ten single-digit leaf shards."""
    store = digit_images(records)
    lines = [f"seed {seed}", "federation root"]
    lines += [f"deploy shard-{d} federation=root image=img-{d}" for d in "0123456789"]
    return build_topology("\n".join(lines), store, cost_model=cost_model)


def nested_topology(records, seed=0, cost_model=None):
    """root -> {low: digits 0-4, high: digits 5-9}, same records as flat."""
    store = digit_images(records)
    lines = [f"seed {seed}", "federation root"]
    lines += ["federation low parent=root", "federation high parent=root"]
    lines += [f"deploy shard-{d} federation=low image=img-{d}" for d in "01234"]
    lines += [f"deploy shard-{d} federation=high image=img-{d}" for d in "56789"]
    return build_topology("\n".join(lines), store, cost_model=cost_model)


def random_predicate(rng: random.Random, records=None, themes=THEMES) -> QueryPredicate:
    """A random mix of prefix / theme / bbox constraints (or match-all).

    When records are given, bboxes are centred on an actual point half the
    time so predicates with hits stay common.
    """
    kind = rng.randrange(8)
    if kind == 0:
        return QueryPredicate.all()
    prefix = theme = bbox = None
    if kind in (1, 4, 5, 7):
        prefix = str(rng.randrange(10)) if rng.random() < 0.7 else f"{rng.randrange(100):02d}"
    if kind in (2, 4, 6, 7):
        theme = rng.choice(themes)
    if kind in (3, 5, 6, 7):
        if records and rng.random() < 0.5:
            anchor = rng.choice(records)
            half_w = rng.uniform(1.0, 40.0)
            half_h = rng.uniform(1.0, 25.0)
            bbox = (
                max(-180.0, anchor.lon - half_w),
                min(180.0, anchor.lon + half_w),
                max(-90.0, anchor.lat - half_h),
                min(90.0, anchor.lat + half_h),
            )
        else:
            lon_a, lon_b = sorted(rng.uniform(-180, 180) for _ in range(2))
            lat_a, lat_b = sorted(rng.uniform(-90, 90) for _ in range(2))
            bbox = (lon_a, lon_b, lat_a, lat_b)
        if bbox[0] >= bbox[1] or bbox[2] >= bbox[3]:
            bbox = None
    if prefix is None and theme is None and bbox is None:
        return QueryPredicate.all()
    return QueryPredicate(prefix=prefix, bbox=bbox, theme=theme)
