"""HTTP data access layer, served at two levels with one read grammar.

A shard gateway fronts a single immutable image (the api container beside
the db container); a federation gateway fronts a query engine and adds the
admin surface that drives the simulated cluster.  Because both answer the
same read grammar, a federation can mount another federation's gateway as
easily as a leaf — nesting is invisible to callers.

Responses are canonical JSON: UTF-8, alphabetical keys, no whitespace, so
identical requests against immutable data yield byte-identical bodies.
Record coordinates and aggregate sums travel as fixed 6-decimal text (these
are exact 6-decimal quantities); centroid means are true JSON numbers in
shortest round-trip form, which is still deterministic but loses nothing.
"""

from __future__ import annotations

import json
import math
import re
from typing import Callable, Mapping

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from .backend import QueryTarget, ShardBackend
from .catalog import LEAF, Catalog, CatalogEntry
from .cluster import Cluster, DeploymentSpec, PodTemplate, ServiceSpec
from .distill import (
    EUCLIDEAN,
    KnnQuery,
    centroids,
    distance,
    knn,
    prefix_len_for_zoom,
)
from .engine import Engine
from .errors import (
    FdbsError,
    NameConflict,
    PartialFailure,
    ServiceUnavailable,
    UnreachableChild,
    UpdateStalled,
)
from .image import ShardImage
from .records import GeoRecord, QueryPredicate, micro_text

SOURCE_HEADER = "x-fdbs-source"

_PREFIX_RE = re.compile(r"^[0-9]{1,5}$")


def canonical_json(payload) -> bytes:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


class _BadParam(Exception):
    def __init__(self, parameter: str, message: str):
        super().__init__(message)
        self.parameter = parameter
        self.message = message


def _json_response(payload, status_code: int = 200, source: str | None = None) -> Response:
    headers = {SOURCE_HEADER: source} if source else None
    return Response(
        content=canonical_json(payload),
        status_code=status_code,
        media_type="application/json",
        headers=headers,
    )


def _error(status_code: int, error_type: str, message: str, parameter: str | None = None) -> Response:
    body: dict = {"message": message, "type": error_type}
    if parameter is not None:
        body["parameter"] = parameter
    return _json_response({"error": body}, status_code)


# --- query-parameter parsing (all params arrive as raw text) ---


def _opt_int(params: Mapping[str, str], name: str, minimum: int | None = None) -> int | None:
    raw = params.get(name)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise _BadParam(name, f"{name} must be an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise _BadParam(name, f"{name} must be >= {minimum}, got {value}")
    return value


def _req_int(params: Mapping[str, str], name: str, minimum: int | None = None) -> int:
    value = _opt_int(params, name, minimum)
    if value is None:
        raise _BadParam(name, f"{name} is required")
    return value


def _opt_float(params: Mapping[str, str], name: str) -> float | None:
    raw = params.get(name)
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise _BadParam(name, f"{name} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise _BadParam(name, f"{name} must be finite, got {raw!r}")
    return value


def _parse_predicate(params: Mapping[str, str]) -> QueryPredicate:
    prefix = params.get("prefix")
    if prefix is not None and not _PREFIX_RE.fullmatch(prefix):
        raise _BadParam("prefix", f"prefix must be 1-5 digits, got {prefix!r}")
    theme = params.get("theme")
    if theme is not None and (not theme or any(c in theme for c in "\t\n\r")):
        raise _BadParam("theme", f"theme must be non-empty plain text, got {theme!r}")
    bbox = None
    raw_bbox = params.get("bbox")
    if raw_bbox is not None:
        parts = raw_bbox.split(",")
        if len(parts) != 4:
            raise _BadParam("bbox", "bbox must be lonmin,lonmax,latmin,latmax")
        try:
            bbox = tuple(float(p) for p in parts)
        except ValueError:
            raise _BadParam("bbox", f"bbox values must be numbers, got {raw_bbox!r}") from None
        if not all(math.isfinite(v) for v in bbox):
            raise _BadParam("bbox", "bbox values must be finite")
    if prefix is None and theme is None and bbox is None:
        return QueryPredicate.all()
    return QueryPredicate(prefix=prefix, bbox=bbox, theme=theme)


# --- payload shapes ---


def _record_json(record: GeoRecord) -> dict:
    return {
        "lat": micro_text(record.lat_micro),
        "lon": micro_text(record.lon_micro),
        "payload": record.payload,
        "postcode": record.postcode,
        "theme": record.theme,
    }


def _entry_json(entry: CatalogEntry) -> dict:
    return {
        "capabilities": sorted(entry.capabilities),
        "coverage": entry.coverage.to_expr(),
        "kind": entry.kind,
        "name": entry.name,
        "registered_at": entry.registered_at,
        "service_id": entry.service_id,
    }


def _body_field(body: dict, name: str, kind: type, default=..., minimum: int | None = None):
    if name not in body:
        if default is ...:
            raise _BadParam(name, f"{name} is required")
        return default
    value = body[name]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise _BadParam(name, f"{name} must be {kind.__name__}")
    if minimum is not None and value < minimum:
        raise _BadParam(name, f"{name} must be >= {minimum}")
    return value


# --- app factory ---


def _build_app(
    mode: str,
    target_for: Callable[[], QueryTarget],
    source_for: Callable[[QueryPredicate], str],
    catalog_snapshot: Callable[[], list[CatalogEntry]],
    ready_info: Callable[[], dict | None],
    metric: str = EUCLIDEAN,
) -> FastAPI:
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    # the web map is served from wherever; this is read-mostly public data
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, "HTTPError", str(exc.detail or "request failed"))

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        return _error(500, "InternalError", "internal error")

    def _guard(handler: Callable[[QueryTarget, Mapping[str, str]], Response]):
        def wrapped(request: Request) -> Response:
            try:
                return handler(target_for(), request.query_params)
            except _BadParam as exc:
                return _error(400, "InvalidParameter", exc.message, exc.parameter)
            except PartialFailure as exc:
                return _error(503, "PartialFailure", str(exc))
            except (ServiceUnavailable, UnreachableChild) as exc:
                return _error(503, type(exc).__name__, str(exc))
            except FdbsError as exc:
                return _error(400, type(exc).__name__, str(exc))
            except ValueError as exc:
                return _error(400, "InvalidParameter", str(exc))

        return wrapped

    @app.get("/healthz")
    def healthz() -> Response:
        return _json_response({"mode": mode, "status": "ok"})

    @app.get("/readyz")
    def readyz() -> Response:
        info = ready_info()
        if info is None:
            return _error(503, "ServiceUnavailable", "backing store not loaded")
        return _json_response({"mode": mode, "status": "ready", **info})

    @app.get("/records")
    @_guard
    def records(target: QueryTarget, params: Mapping[str, str]) -> Response:
        pred = _parse_predicate(params)
        offset = _opt_int(params, "offset", minimum=0) or 0
        limit = _opt_int(params, "limit", minimum=0)
        total = target.count(pred)
        page = target.records(pred, offset, limit)
        payload = {
            "limit": limit,
            "offset": offset,
            "records": [_record_json(r) for r in page],
            "total": total,
        }
        return _json_response(payload, source=source_for(pred))

    @app.get("/count")
    @_guard
    def count(target: QueryTarget, params: Mapping[str, str]) -> Response:
        pred = _parse_predicate(params)
        return _json_response({"count": target.count(pred)}, source=source_for(pred))

    @app.get("/groups")
    @_guard
    def groups(target: QueryTarget, params: Mapping[str, str]) -> Response:
        pred = _parse_predicate(params)
        zoom = _req_int(params, "zoom")
        prefix_len = prefix_len_for_zoom(zoom)
        aggs = target.groups(pred, prefix_len)
        payload = {
            "groups": [
                {
                    "count": a.count,
                    "prefix": a.prefix,
                    "sum_lat": micro_text(a.sum_lat_micro),
                    "sum_lon": micro_text(a.sum_lon_micro),
                }
                for a in aggs
            ],
            "prefix_len": prefix_len,
            "total": len(aggs),
            "zoom": zoom,
        }
        return _json_response(payload, source=source_for(pred))

    @app.get("/centroids")
    @_guard
    def centroids_endpoint(target: QueryTarget, params: Mapping[str, str]) -> Response:
        pred = _parse_predicate(params)
        zoom = _req_int(params, "zoom")
        cents = centroids(target, KnnQuery(zoom=zoom, k=-1), pred)
        payload = {
            "centroids": [{"lat": c.lat, "lon": c.lon, "prefix": c.prefix} for c in cents],
            "total": len(cents),
            "zoom": zoom,
        }
        return _json_response(payload, source=source_for(pred))

    @app.get("/knn")
    @_guard
    def knn_endpoint(target: QueryTarget, params: Mapping[str, str]) -> Response:
        pred = _parse_predicate(params)
        zoom = _req_int(params, "zoom")
        k = _req_int(params, "k", minimum=0)
        lon = _opt_float(params, "lon")
        lat = _opt_float(params, "lat")
        address = (lon if lon is not None else 0.0, lat if lat is not None else 0.0)
        query = KnnQuery(zoom=zoom, address=address, k=k)
        nearest = knn(target, query, pred, metric)
        payload = {
            "address": {"lat": address[1], "lon": address[0]},
            "k": k,
            "neighbours": [
                {
                    "distance": distance((c.lon, c.lat), address, metric),
                    "lat": c.lat,
                    "lon": c.lon,
                    "prefix": c.prefix,
                }
                for c in nearest
            ],
            "total": len(nearest),
            "zoom": zoom,
        }
        return _json_response(payload, source=source_for(pred))

    @app.get("/catalog")
    def catalog_listing() -> Response:
        entries = catalog_snapshot()
        return _json_response(
            {"entries": [_entry_json(e) for e in entries], "total": len(entries)}
        )

    return app


def build_shard_app(image: ShardImage | None, metric: str = EUCLIDEAN) -> FastAPI:
    """Gateway for one shard: the read surface directly over the image."""
    backend = ShardBackend(image) if image is not None else None

    def target_for() -> QueryTarget:
        if backend is None:
            raise ServiceUnavailable("shard image not loaded")
        return backend

    def source_for(pred: QueryPredicate) -> str:
        return f"leaf/{image.image_id}" if image is not None else "leaf/unloaded"

    def catalog_snapshot() -> list[CatalogEntry]:
        if image is None:
            return []
        return [
            CatalogEntry(
                name=image.image_id,
                service_id="self",
                kind=LEAF,
                coverage=image.coverage,
            )
        ]

    def ready_info() -> dict | None:
        if image is None:
            return None
        return {"image_id": image.image_id, "version": image.version}

    return _build_app("shard", target_for, source_for, catalog_snapshot, ready_info, metric)


def build_federation_app(
    engine: Engine,
    catalog: Catalog,
    cluster: Cluster,
    metric: str = EUCLIDEAN,
) -> FastAPI:
    """Gateway for a federation: the same read surface over the engine, plus
    the admin endpoints that drive the simulated cluster."""

    def source_for(pred: QueryPredicate) -> str:
        names = ",".join(e.name for e in catalog.resolve(pred))
        return f"federation/{engine.name};targets={names}"

    def ready_info() -> dict | None:
        return {"federation": engine.name, "services": len(catalog.snapshot())}

    app = _build_app(
        "federation", lambda: engine, source_for, catalog.snapshot, ready_info, metric
    )

    async def _admin_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise _BadParam("body", "request body must be a JSON object") from None
        if not isinstance(body, dict):
            raise _BadParam("body", "request body must be a JSON object")
        return body

    def _admin_error(exc: Exception) -> Response:
        if isinstance(exc, _BadParam):
            return _error(400, "InvalidParameter", exc.message, exc.parameter)
        if isinstance(exc, (UpdateStalled, ServiceUnavailable)):
            return _error(503, type(exc).__name__, str(exc))
        if isinstance(exc, NameConflict):
            return _error(409, "NameConflict", str(exc))
        if isinstance(exc, FdbsError):
            return _error(400, type(exc).__name__, str(exc))
        raise exc

    @app.post("/admin/deploy")
    async def admin_deploy(request: Request) -> Response:
        try:
            body = await _admin_body(request)
            deployment_id = _body_field(body, "deployment_id", str)
            image_id = _body_field(body, "image_id", str)
            replicas = _body_field(body, "replicas", int, minimum=1)
            max_unavailable = _body_field(body, "max_unavailable", int, default=1, minimum=0)
            max_surge = _body_field(body, "max_surge", int, default=1, minimum=0)
            service_id = _body_field(body, "service_id", str, default=f"svc-{deployment_id}")
            entry_name = _body_field(body, "entry_name", str, default=deployment_id)
            policy = _body_field(body, "policy", str, default="round_robin")
            image = cluster.images.get(image_id)
            labels = {"app": deployment_id}
            cluster.apply_deployment(
                DeploymentSpec(
                    deployment_id=deployment_id,
                    replicas=replicas,
                    template=PodTemplate(labels=labels, image_id=image_id),
                    max_unavailable=max_unavailable,
                    max_surge=max_surge,
                )
            )
            cluster.apply_service(
                ServiceSpec(service_id=service_id, selector=labels, policy=policy)
            )
            catalog.register(
                CatalogEntry(
                    name=entry_name, service_id=service_id, kind=LEAF, coverage=image.coverage
                )
            )
            cluster.converge()
            payload = {
                "deployment_id": deployment_id,
                "entry_name": entry_name,
                "ready": cluster.ready_count(deployment_id),
                "service_id": service_id,
                "step": cluster.step,
            }
            return _json_response(payload)
        except Exception as exc:
            return _admin_error(exc)

    @app.post("/admin/update")
    async def admin_update(request: Request) -> Response:
        try:
            body = await _admin_body(request)
            deployment_id = _body_field(body, "deployment_id", str)
            image_id = _body_field(body, "image_id", str)
            report = cluster.rolling_update(deployment_id, image_id)
            payload = {
                "deployment_id": deployment_id,
                "from": report.old_image_id,
                "no_op": report.no_op,
                "steps": report.steps_taken,
                "to": report.new_image_id,
            }
            return _json_response(payload)
        except Exception as exc:
            return _admin_error(exc)

    @app.post("/admin/kill-pod")
    async def admin_kill_pod(request: Request) -> Response:
        try:
            body = await _admin_body(request)
            pod_id = _body_field(body, "pod_id", str)
            steps = _body_field(body, "advance", int, default=0, minimum=0)
            cluster.kill_pod(pod_id)
            if steps:
                cluster.advance(steps)
            return _json_response({"killed": pod_id, "step": cluster.step})
        except Exception as exc:
            return _admin_error(exc)

    return app


def serve(app: FastAPI, port: int, host: str = "127.0.0.1") -> None:
    """Run a gateway on a real socket (CLI `serve`); blocks until stopped."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
