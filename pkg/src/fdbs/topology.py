"""Assembly of federation trees: leaf shard deployments at the bottom,
query engines stacked to any depth above them, all sharing one simulated
cluster.

A topology can be built programmatically from nested FederationSpec values
or parsed from a bootstrap file.  The file is line-oriented; federations
must be declared before they are referenced:

    seed 7
    readiness-delay 2
    federation root
    federation east parent=root
    deploy shard-4 federation=east image=img-4 replicas=2

Every child federation is mounted into its parent through an external
endpoint service and a catalog entry, exactly the way a leaf is — which is
the point: the parent cannot tell them apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import LEAF, Catalog, CatalogEntry
from .cluster import Cluster, DeploymentSpec, ImageStore, PodTemplate, ServiceSpec
from .costmodel import CostModel
from .coverage import Coverage, parse_coverage
from .engine import DEFAULT_FAN_OUT, Engine, federate
from .errors import FormatError, InvalidSpec


@dataclass
class LeafSpec:
    name: str
    image_id: str
    replicas: int = 1
    policy: str = "round_robin"
    max_unavailable: int = 1
    max_surge: int = 1


@dataclass
class FederationSpec:
    name: str
    leaves: list[LeafSpec] = field(default_factory=list)
    children: list["FederationSpec"] = field(default_factory=list)
    coverage_expr: str | None = None


@dataclass
class TopologyFile:
    seed: int = 0
    readiness_delay: int = 2
    root: FederationSpec | None = None


@dataclass
class Topology:
    cluster: Cluster
    root: Engine
    engines: dict[str, Engine]
    catalogs: dict[str, Catalog]

    def engine(self, name: str) -> Engine:
        return self.engines[name]


def deploy_leaf(
    cluster: Cluster,
    catalog: Catalog,
    leaf: LeafSpec,
) -> CatalogEntry:
    """One shard service: a deployment of identical pods, a stable service
    selecting them, and a catalog entry carrying the image's coverage."""
    image = cluster.images.get(leaf.image_id)
    labels = {"app": leaf.name}
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id=leaf.name,
            replicas=leaf.replicas,
            template=PodTemplate(labels=labels, image_id=leaf.image_id),
            max_unavailable=leaf.max_unavailable,
            max_surge=leaf.max_surge,
        )
    )
    cluster.apply_service(
        ServiceSpec(service_id=f"svc-{leaf.name}", selector=labels, policy=leaf.policy)
    )
    return catalog.register(
        CatalogEntry(
            name=leaf.name,
            service_id=f"svc-{leaf.name}",
            kind=LEAF,
            coverage=image.coverage,
        )
    )


def build_federation(
    spec: FederationSpec,
    images: ImageStore,
    seed: int = 0,
    readiness_delay: int = 2,
    cost_model: CostModel | None = None,
    fan_out: int = DEFAULT_FAN_OUT,
) -> Topology:
    """Stand up a whole federation tree on a fresh cluster and converge it."""
    cluster = Cluster(images=images, readiness_delay=readiness_delay, seed=seed)
    engines: dict[str, Engine] = {}
    catalogs: dict[str, Catalog] = {}
    seen: set[str] = set()

    def check_name(name: str) -> None:
        if name in seen:
            raise InvalidSpec(f"duplicate name {name!r} in topology")
        seen.add(name)

    def wire(node: FederationSpec) -> tuple[Engine, Coverage]:
        check_name(node.name)
        catalog = Catalog()
        engine = Engine(
            catalog, cluster, cost_model=cost_model, fan_out=fan_out, name=node.name
        )
        engines[node.name] = engine
        catalogs[node.name] = catalog
        for leaf in node.leaves:
            check_name(leaf.name)
            deploy_leaf(cluster, catalog, leaf)
        for child in node.children:
            child_engine, child_coverage = wire(child)
            endpoint = f"engine://{child.name}"
            cluster.register_endpoint(endpoint, child_engine)
            federate(
                catalog,
                cluster,
                name=child.name,
                child_endpoint=endpoint,
                declared_coverage=child_coverage,
                service_id=f"svc-{child.name}",
            )
        if node.coverage_expr is not None:
            coverage = parse_coverage(node.coverage_expr)
        else:
            parts = {entry.coverage for entry in catalog.snapshot()}
            if not parts:
                raise InvalidSpec(f"federation {node.name!r} has no leaves or children")
            coverage = next(iter(parts)) if len(parts) == 1 else Coverage.union_of(parts)
        return engine, coverage

    root_engine, _ = wire(spec)
    cluster.converge()
    return Topology(cluster=cluster, root=root_engine, engines=engines, catalogs=catalogs)


# --- bootstrap files ---


def _kv(parts: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for part in parts:
        key, sep, value = part.partition("=")
        if not sep or not key or not value:
            raise FormatError(f"line {lineno}: expected key=value, got {part!r}")
        out[key] = value
    return out


def parse_topology(text: str) -> TopologyFile:
    topo = TopologyFile()
    nodes: dict[str, FederationSpec] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]
        if op in ("seed", "readiness-delay"):
            if nodes:
                raise FormatError(f"line {lineno}: {op} must precede declarations")
            if len(args) != 1:
                raise FormatError(f"line {lineno}: {op} takes one integer")
            try:
                setattr(topo, op.replace("-", "_"), int(args[0]))
            except ValueError:
                raise FormatError(f"line {lineno}: {op} takes an integer") from None
        elif op == "federation":
            if not args:
                raise FormatError(f"line {lineno}: federation needs a name")
            name = args[0]
            if name in nodes:
                raise FormatError(f"line {lineno}: duplicate federation {name!r}")
            kv = _kv(args[1:], lineno)
            node = FederationSpec(name=name, coverage_expr=kv.get("coverage"))
            parent = kv.get("parent")
            if parent is None:
                if topo.root is not None:
                    raise FormatError(f"line {lineno}: a topology has exactly one root federation")
                topo.root = node
            else:
                if parent not in nodes:
                    raise FormatError(f"line {lineno}: unknown parent federation {parent!r}")
                nodes[parent].children.append(node)
            nodes[name] = node
        elif op == "deploy":
            if not args:
                raise FormatError(f"line {lineno}: deploy needs a name")
            kv = _kv(args[1:], lineno)
            owner = kv.get("federation")
            if owner is None or owner not in nodes:
                raise FormatError(f"line {lineno}: deploy needs federation=<declared name>")
            if "image" not in kv:
                raise FormatError(f"line {lineno}: deploy needs image=")
            try:
                replicas = int(kv.get("replicas", "1"))
                max_unavailable = int(kv.get("max-unavailable", "1"))
                max_surge = int(kv.get("max-surge", "1"))
            except ValueError:
                raise FormatError(f"line {lineno}: replica counts must be integers") from None
            nodes[owner].leaves.append(
                LeafSpec(
                    name=args[0],
                    image_id=kv["image"],
                    replicas=replicas,
                    policy=kv.get("policy", "round_robin"),
                    max_unavailable=max_unavailable,
                    max_surge=max_surge,
                )
            )
        else:
            raise FormatError(f"line {lineno}: unknown declaration {op!r}")
    if topo.root is None:
        raise FormatError("topology declares no root federation")
    return topo


def build_topology(
    source: TopologyFile | str,
    images: ImageStore,
    cost_model: CostModel | None = None,
    fan_out: int = DEFAULT_FAN_OUT,
) -> Topology:
    topo = parse_topology(source) if isinstance(source, str) else source
    return build_federation(
        topo.root,
        images,
        seed=topo.seed,
        readiness_delay=topo.readiness_delay,
        cost_model=cost_model,
        fan_out=fan_out,
    )
