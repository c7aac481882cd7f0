"""Operator command line: generate data, partition it, bake shard images,
stand up a simulated federation, query it, roll updates, and benchmark.

Every command is a thin driver over the library modules; simulated-mode
commands are fully determined by their seeds.  Configuration precedence is
flags > environment (FDBS_*) > config file (key=value lines) > defaults.

Exit codes: 0 success, 1 user error (bad input/arguments), 2 internal error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .cluster import ImageStore
from .costmodel import (
    SimulatedCost,
    WorkloadSpec,
    benchmark_simulated,
    build_cost_model,
    export_samples_csv,
    lookup_best,
)
from .coverage import parse_coverage
from .datagen import generate_records, read_dataset, write_dataset
from .distill import KnnQuery, centroids, distance, knn, prefix_len_for_zoom
from .errors import FdbsError, FormatError
from .gateway import build_federation_app, build_shard_app, serve
from .image import build_image, load_image, serialize_image
from .partition import partition_by_cuboid, partition_by_prefix
from .records import QueryPredicate, micro_text
from .topology import Topology, build_topology

PARTS_MANIFEST = "parts.tsv"
PARTS_HEADER = "file\tcoverage"

_COMMANDS = (
    "gen", "partition", "build", "deploy", "serve", "query", "update", "bench", "topology",
)


def _emit_table(headers: list[str], rows: list[list[str]], fmt: str) -> None:
    if fmt == "tsv":
        click.echo("\t".join(headers))
        for row in rows:
            click.echo("\t".join(row))
        return
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    click.echo("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    for row in rows:
        click.echo("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def _load_config(ctx: click.Context, param: click.Parameter, value: str | None):
    if not value:
        return None
    cfg: dict[str, str] = {}
    for lineno, raw in enumerate(Path(value).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise click.BadParameter(f"line {lineno}: expected key=value, got {line!r}")
        cfg[key.strip().replace("-", "_")] = val.strip()
    ctx.default_map = {command: dict(cfg) for command in _COMMANDS}
    return value


def _load_images(directory: str) -> ImageStore:
    store = ImageStore()
    paths = sorted(Path(directory).glob("*.img"))
    if not paths:
        raise FormatError(f"no *.img files under {directory}")
    for path in paths:
        store.register(load_image(path.read_bytes()))
    return store


def _topology(topology_file: str, images_dir: str) -> Topology:
    return build_topology(
        Path(topology_file).read_text(encoding="utf-8"), _load_images(images_dir)
    )


def _parse_rows_spec(spec: str) -> tuple[int, ...]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise click.BadParameter("rows spec is start:stop:count or a comma list")
        start, stop, count = (int(p) for p in parts)
        if count < 2 or stop <= start:
            raise click.BadParameter("rows spec needs stop > start and count >= 2")
        step = (stop - start) / (count - 1)
        return tuple(round(start + i * step) for i in range(count))
    return tuple(int(p) for p in spec.split(","))


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_config,
    expose_value=False,
    is_eager=True,
    help="Config file of key=value lines used as command defaults.",
)
def cli() -> None:
    """Federated read-only geo database: build it, run it, query it."""


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--count", type=click.IntRange(min=0), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--themes", default="postcode", show_default=True, help="Comma-separated theme names.")
def gen(out: str, count: int, seed: int, themes: str) -> None:
    """Generate a deterministic synthetic dataset."""
    names = tuple(t for t in themes.split(",") if t)
    records = generate_records(count, seed=seed, themes=names)
    write_dataset(records, out)
    click.echo(f"wrote {len(records)} records to {out}")


@cli.command()
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--strategy", type=click.Choice(["prefix", "cuboid"]), default="prefix", show_default=True)
@click.option("--prefix-len", type=click.IntRange(1, 5), default=1, show_default=True)
@click.option("--cell-deg", type=float, default=30.0, show_default=True)
@click.option("--origin", default="0,0", show_default=True, help="Grid origin lon,lat.")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def partition(input_: str, strategy: str, prefix_len: int, cell_deg: float, origin: str, out_dir: str) -> None:
    """Split a dataset into per-shard datasets plus a coverage manifest."""
    records = read_dataset(input_)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parts: list[tuple[str, str, int]] = []  # (file, coverage expr, record count)
    if strategy == "prefix":
        for key, bucket in sorted(partition_by_prefix(records, prefix_len).items()):
            write_dataset(bucket, out / f"{key}.tsv")
            parts.append((f"{key}.tsv", f"prefix:{key}", len(bucket)))
    else:
        try:
            lon0, lat0 = (float(v) for v in origin.split(","))
        except ValueError:
            raise click.BadParameter("origin must be lon,lat") from None
        buckets = partition_by_cuboid(records, cell_deg, origin=(lon0, lat0))
        for index, cuboid in enumerate(sorted(buckets)):
            name = f"part-{index:03d}.tsv"
            write_dataset(buckets[cuboid], out / name)
            parts.append((name, "cuboid:" + cuboid.to_expr(), len(buckets[cuboid])))
    manifest = [PARTS_HEADER] + [f"{f}\t{cov}" for f, cov, _ in parts]
    (out / PARTS_MANIFEST).write_text("\n".join(manifest) + "\n", encoding="utf-8")
    _emit_table(
        ["file", "coverage", "records"],
        [[f, c, str(n)] for f, c, n in parts],
        "human",
    )
    click.echo(f"wrote {len(parts)} parts + {PARTS_MANIFEST} to {out_dir}")


@cli.command()
@click.option("--input", "input_", type=click.Path(exists=True, dir_okay=False), help="Single dataset to bake.")
@click.option("--coverage", "coverage_expr", help="Coverage expression for --input mode.")
@click.option("--image-id", help="Image id override for --input mode (default: content-derived).")
@click.option("--out", type=click.Path(dir_okay=False), help="Output image file for --input mode.")
@click.option("--parts", type=click.Path(exists=True, file_okay=False), help="Partition directory with parts.tsv.")
@click.option("--id-prefix", default="img", show_default=True, help="Image id prefix for --parts mode.")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory for --parts mode.")
@click.option("--version", type=click.IntRange(min=1), default=1, show_default=True)
def build(input_, coverage_expr, image_id, out, parts, id_prefix, out_dir, version) -> None:
    """Bake immutable shard images from datasets."""
    if (input_ is None) == (parts is None):
        raise click.UsageError("use exactly one of --input or --parts")
    rows: list[list[str]] = []
    if input_ is not None:
        if not coverage_expr or not out:
            raise click.UsageError("--input mode requires --coverage and --out")
        image = build_image(
            read_dataset(input_), parse_coverage(coverage_expr), version=version, image_id=image_id
        )
        Path(out).write_bytes(serialize_image(image))
        rows.append([out, image.image_id, str(image.record_count), image.checksum[:12]])
    else:
        target = Path(out_dir) if out_dir else Path(parts)
        target.mkdir(parents=True, exist_ok=True)
        manifest = Path(parts) / PARTS_MANIFEST
        lines = manifest.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != PARTS_HEADER:
            raise FormatError(f"{manifest} must start with {PARTS_HEADER!r}")
        for line in lines[1:]:
            if not line.strip():
                continue
            file_name, sep, expr = line.partition("\t")
            if not sep:
                raise FormatError(f"bad manifest line {line!r}")
            stem = Path(file_name).stem
            image = build_image(
                read_dataset(Path(parts) / file_name),
                parse_coverage(expr),
                version=version,
                image_id=f"{id_prefix}-{stem}",
            )
            out_path = target / f"{stem}.img"
            out_path.write_bytes(serialize_image(image))
            rows.append([str(out_path), image.image_id, str(image.record_count), image.checksum[:12]])
    _emit_table(["file", "image_id", "records", "checksum"], rows, "human")


@cli.command()
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--trace", is_flag=True, help="Print the full transition trace.")
@click.option("--format", "fmt", type=click.Choice(["human", "tsv"]), default="human", show_default=True)
def deploy(topology_file: str, images_dir: str, trace: bool, fmt: str) -> None:
    """Stand up a federation tree in the simulator and report its state."""
    topo = _topology(topology_file, images_dir)
    rows = []
    for name in sorted(topo.engines):
        for entry in topo.catalogs[name].snapshot():
            rows.append([name, entry.name, entry.kind, entry.service_id, entry.coverage.to_expr()])
    _emit_table(["federation", "entry", "kind", "service", "coverage"], rows, fmt)
    click.echo(f"converged at step {topo.cluster.step}")
    if trace:
        for line in topo.cluster.trace_lines():
            click.echo(line)


@cli.command(name="serve")
@click.option("--mode", type=click.Choice(["shard", "federation"]), default="federation", show_default=True)
@click.option("--image", "image_file", type=click.Path(exists=True, dir_okay=False), help="Shard image for --mode shard.")
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), help="Topology file for --mode federation.")
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), help="Image directory for --mode federation.")
@click.option("--port", type=click.IntRange(1, 65535), default=8080, show_default=True, envvar="FDBS_PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(mode: str, image_file: str | None, topology_file: str | None, images_dir: str | None, port: int, host: str) -> None:
    """Serve a gateway over HTTP (blocks until interrupted)."""
    if mode == "shard":
        if not image_file:
            raise click.UsageError("--mode shard requires --image")
        app = build_shard_app(load_image(Path(image_file).read_bytes()))
    else:
        if not topology_file or not images_dir:
            raise click.UsageError("--mode federation requires --topology and --images")
        topo = _topology(topology_file, images_dir)
        app = build_federation_app(
            topo.root, topo.catalogs[topo.root.name], topo.cluster
        )
    click.echo(f"serving {mode} gateway on {host}:{port}")
    serve(app, port=port, host=host)


@cli.command()
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--kind", type=click.Choice(["records", "count", "groups", "centroids", "knn"]), default="records", show_default=True)
@click.option("--prefix")
@click.option("--theme")
@click.option("--bbox", help="lonmin,lonmax,latmin,latmax")
@click.option("--zoom", type=int)
@click.option("--k", type=click.IntRange(min=0))
@click.option("--lon", type=float, default=0.0, show_default=True)
@click.option("--lat", type=float, default=0.0, show_default=True)
@click.option("--offset", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--limit", type=click.IntRange(min=0))
@click.option("--format", "fmt", type=click.Choice(["human", "tsv"]), default="human", show_default=True)
def query(topology_file, images_dir, kind, prefix, theme, bbox, zoom, k, lon, lat, offset, limit, fmt) -> None:
    """Run one query against a freshly deployed federation."""
    box = None
    if bbox:
        try:
            box = tuple(float(v) for v in bbox.split(","))
        except ValueError:
            raise click.BadParameter("bbox must be four numbers") from None
        if len(box) != 4:
            raise click.BadParameter("bbox must be lonmin,lonmax,latmin,latmax")
    if prefix is None and theme is None and box is None:
        pred = QueryPredicate.all()
    else:
        pred = QueryPredicate(prefix=prefix, bbox=box, theme=theme)
    engine = _topology(topology_file, images_dir).root
    if kind in ("groups", "centroids", "knn") and zoom is None:
        raise click.UsageError(f"--kind {kind} requires --zoom")
    if kind == "records":
        total = engine.count(pred)
        page = engine.records(pred, offset, limit)
        _emit_table(
            ["postcode", "theme", "lon", "lat", "payload"],
            [[r.postcode, r.theme, micro_text(r.lon_micro), micro_text(r.lat_micro), r.payload] for r in page],
            fmt,
        )
        click.echo(f"{len(page)} of {total} matching records (offset={offset})")
    elif kind == "count":
        click.echo(str(engine.count(pred)))
    elif kind == "groups":
        aggs = engine.groups(pred, prefix_len_for_zoom(zoom))
        _emit_table(
            ["prefix", "count", "sum_lon", "sum_lat"],
            [[a.prefix, str(a.count), micro_text(a.sum_lon_micro), micro_text(a.sum_lat_micro)] for a in aggs],
            fmt,
        )
    elif kind == "centroids":
        cents = centroids(engine, KnnQuery(zoom=zoom, k=-1), pred)
        _emit_table(
            ["prefix", "lon", "lat"],
            [[c.prefix, repr(c.lon), repr(c.lat)] for c in cents],
            fmt,
        )
    else:
        if k is None:
            raise click.UsageError("--kind knn requires --k")
        address = (lon, lat)
        nearest = knn(engine, KnnQuery(zoom=zoom, address=address, k=k), pred)
        _emit_table(
            ["prefix", "lon", "lat", "distance"],
            [
                [c.prefix, repr(c.lon), repr(c.lat), repr(distance((c.lon, c.lat), address))]
                for c in nearest
            ],
            fmt,
        )


@cli.command()
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--deployment", required=True)
@click.option("--image-id", required=True)
@click.option("--trace", is_flag=True, help="Print the update's transition trace.")
def update(topology_file: str, images_dir: str, deployment: str, image_id: str, trace: bool) -> None:
    """Roll a deployed shard to a new image under availability constraints."""
    topo = _topology(topology_file, images_dir)
    report = topo.cluster.rolling_update(deployment, image_id)
    if report.no_op:
        click.echo(f"no-op: {deployment} already serves {image_id}")
        return
    click.echo(
        f"updated {deployment}: {report.old_image_id} -> {report.new_image_id} "
        f"in {report.steps_taken} steps"
    )
    if trace:
        for t in report.transitions:
            click.echo(t.to_line())


@cli.command()
@click.option("--param", "params", multiple=True, default=("1:50:0.02", "2:110:0.011"),
              show_default=True, help="level:overhead_ms:per_row_ms (repeatable).")
@click.option("--rows", "rows_spec", default="200:12000:40", show_default=True,
              help="start:stop:count grid or comma list.")
@click.option("--repeats", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--noise", type=click.FloatRange(0, 0.99), default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples-out", type=click.Path(dir_okay=False), help="Write raw samples as CSV.")
@click.option("--gnuplot", type=click.Path(dir_okay=False), help="Write a plottable data file.")
@click.option("--format", "fmt", type=click.Choice(["human", "tsv"]), default="human", show_default=True)
def bench(params, rows_spec, repeats, noise, seed, samples_out, gnuplot, fmt) -> None:
    """Run the simulated benchmark, fit latency models, report crossovers."""
    cost_params: dict[int, tuple[float, float]] = {}
    for spec in params:
        try:
            level_s, a_s, b_s = spec.split(":")
            cost_params[int(level_s)] = (float(a_s), float(b_s))
        except ValueError:
            raise click.BadParameter(f"--param must be level:overhead:per_row, got {spec!r}") from None
    rows_grid = _parse_rows_spec(rows_spec)
    cost = SimulatedCost(params=cost_params, noise_pct=noise, seed=seed)
    workload = WorkloadSpec(rows_grid=rows_grid, levels=tuple(sorted(cost_params)), repeats=repeats)
    samples = benchmark_simulated(cost, workload)
    model = build_cost_model(samples)
    _emit_table(
        ["level", "intercept_ms", "slope_ms_per_row", "r_squared", "samples"],
        [
            [str(level), f"{m.intercept_ms:.4f}", f"{m.slope_ms_per_row:.6f}",
             f"{m.r_squared:.6f}", str(m.sample_count)]
            for level, m in sorted(model.models.items())
        ],
        fmt,
    )
    cross_rows = []
    for (k_low, k_high), fitted in sorted(model.crossovers.items()):
        analytic = cost.analytic_crossover(k_low, k_high)
        delta = (fitted - analytic) / analytic * 100.0
        cross_rows.append([f"{k_low}->{k_high}", f"{fitted:.1f}", f"{analytic:.1f}", f"{delta:+.2f}%"])
    if cross_rows:
        _emit_table(["levels", "fitted_rows", "analytic_rows", "delta"], cross_rows, fmt)
    probe_rows = sorted({rows_grid[0], rows_grid[len(rows_grid) // 2], rows_grid[-1]})
    _emit_table(
        ["rows", "best_level"] + [f"predicted_ms@k{level}" for level in sorted(cost_params)],
        [
            [str(r), str(lookup_best(model, r))]
            + [f"{model.predict(level, r):.2f}" for level in sorted(cost_params)]
            for r in probe_rows
        ],
        fmt,
    )
    if samples_out:
        Path(samples_out).write_text(export_samples_csv(samples), encoding="utf-8")
        click.echo(f"samples written to {samples_out}")
    if gnuplot:
        blocks = []
        for level in sorted(cost_params):
            lines = [f"# level {level}: rows elapsed_ms"]
            lines.extend(
                f"{s.rows} {s.elapsed_ms!r}" for s in samples if s.concurrency == level
            )
            blocks.append("\n".join(lines))
        Path(gnuplot).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
        click.echo(f"plot data written to {gnuplot}")


@cli.command(name="topology")
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), required=True)
def topology_cmd(topology_file: str, images_dir: str) -> None:
    """Print every federation's catalog as an importable document."""
    topo = _topology(topology_file, images_dir)
    for name in sorted(topo.catalogs):
        marker = " (root)" if name == topo.root.name else ""
        click.echo(f"## federation {name}{marker}")
        click.echo(topo.catalogs[name].export_text(), nl=False)


def entry() -> None:
    try:
        cli.main(standalone_mode=False, auto_envvar_prefix="FDBS")
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except FdbsError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - the 0/1/2 contract needs a catch-all
        click.echo(f"internal error: {exc!r}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entry()
