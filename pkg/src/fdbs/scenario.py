"""Line-oriented scenario files that drive the cluster simulator.

A scenario is a plain-text script: configuration lines first, then one
operation per line, executed in order against a fresh cluster.  Pods are
addressed positionally (live pods of a deployment in pod_id order) because
generated pod ids are not known when the file is written.

    seed 42
    readiness-delay 2
    deploy shards replicas=3 image=img-a
    service geo selector=app=shards policy=round_robin
    converge
    kill shards 0
    advance 4
    update shards image=img-b

Comments start with ``#``; blank lines are ignored.  Running a scenario
returns the cluster, whose transition trace serves golden-trace tests.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .cluster import Cluster, DeploymentSpec, ImageStore, PodTemplate, ServiceSpec
from .errors import FormatError, UnknownPod

_CONFIG_KEYS = ("seed", "readiness-delay", "termination-delay", "update-timeout")


@dataclass
class Scenario:
    seed: int = 0
    readiness_delay: int = 2
    termination_delay: int = 1
    update_timeout: int = 100
    ops: list[tuple] = field(default_factory=list)


def _parse_kv(parts: list[str], lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in parts:
        key, sep, value = part.partition("=")
        if not sep or not key or not value:
            raise FormatError(f"line {lineno}: expected key=value, got {part!r}")
        out[key] = value
    return out

def _parse_int(kv: dict[str, str], key: str, lineno: int, default: int | None = None) -> int:
    if key not in kv:
        if default is None:
            raise FormatError(f"line {lineno}: missing {key}=")
        return default
    try:
        return int(kv[key])
    except ValueError:
        raise FormatError(f"line {lineno}: {key} must be an integer, got {kv[key]!r}") from None

def _parse_labels(text: str, lineno: int) -> dict[str, str]:
    labels: dict[str, str] = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise FormatError(f"line {lineno}: bad label {item!r}")
        labels[key] = value
    return labels


def parse_scenario(text: str) -> Scenario:
    scenario = Scenario()
    ops_started = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]
        if op in _CONFIG_KEYS:
            if ops_started:
                raise FormatError(f"line {lineno}: {op} must precede all operations")
            if len(args) != 1:
                raise FormatError(f"line {lineno}: {op} takes one integer")
            try:
                value = int(args[0])
            except ValueError:
                raise FormatError(f"line {lineno}: {op} takes an integer") from None
            setattr(scenario, op.replace("-", "_"), value)
            continue
        ops_started = True
        if op == "deploy":
            if not args:
                raise FormatError(f"line {lineno}: deploy needs a deployment id")
            kv = _parse_kv(args[1:], lineno)
            labels = _parse_labels(kv["labels"], lineno) if "labels" in kv else {"app": args[0]}
            if "image" not in kv:
                raise FormatError(f"line {lineno}: deploy needs image=")
            scenario.ops.append(
                (
                    "deploy",
                    args[0],
                    _parse_int(kv, "replicas", lineno),
                    kv["image"],
                    _parse_int(kv, "max-unavailable", lineno, default=1),
                    _parse_int(kv, "max-surge", lineno, default=1),
                    labels,
                )
            )
        elif op == "service":
            if not args:
                raise FormatError(f"line {lineno}: service needs a service id")
            kv = _parse_kv(args[1:], lineno)
            if "endpoint" in kv:
                scenario.ops.append(("external-service", args[0], kv["endpoint"]))
                continue
            if "selector" not in kv:
                raise FormatError(f"line {lineno}: service needs selector= or endpoint=")
            scenario.ops.append(
                (
                    "service",
                    args[0],
                    _parse_labels(kv["selector"], lineno),
                    kv.get("policy", "round_robin"),
                )
            )
        elif op == "advance":
            if len(args) != 1 or not args[0].isdigit():
                raise FormatError(f"line {lineno}: advance takes a step count")
            scenario.ops.append(("advance", int(args[0])))
        elif op == "converge":
            kv = _parse_kv(args, lineno)
            scenario.ops.append(("converge", _parse_int(kv, "max", lineno, default=100)))
        elif op == "kill":
            if len(args) != 2 or not args[1].isdigit():
                raise FormatError(f"line {lineno}: kill takes <deployment> <pod index>")
            scenario.ops.append(("kill", args[0], int(args[1])))
        elif op == "update":
            if len(args) < 1:
                raise FormatError(f"line {lineno}: update needs a deployment id")
            kv = _parse_kv(args[1:], lineno)
            if "image" not in kv:
                raise FormatError(f"line {lineno}: update needs image=")
            scenario.ops.append(("update", args[0], kv["image"]))
        elif op == "scale":
            if len(args) < 1:
                raise FormatError(f"line {lineno}: scale needs a deployment id")
            kv = _parse_kv(args[1:], lineno)
            scenario.ops.append(("scale", args[0], _parse_int(kv, "replicas", lineno)))
        else:
            raise FormatError(f"line {lineno}: unknown operation {op!r}")
    return scenario


def run_scenario(scenario: Scenario | str, images: ImageStore) -> Cluster:
    """Execute a scenario against a fresh cluster and return it; the
    cluster's ``trace_lines()`` is the golden-trace output."""
    if isinstance(scenario, str):
        scenario = parse_scenario(scenario)
    cluster = Cluster(
        images=images,
        readiness_delay=scenario.readiness_delay,
        termination_delay=scenario.termination_delay,
        seed=scenario.seed,
        update_timeout=scenario.update_timeout,
    )
    for op in scenario.ops:
        kind = op[0]
        if kind == "deploy":
            _, dep_id, replicas, image_id, max_unavailable, max_surge, labels = op
            spec = DeploymentSpec(
                deployment_id=dep_id,
                replicas=replicas,
                template=PodTemplate(labels=labels, image_id=image_id),
                max_unavailable=max_unavailable,
                max_surge=max_surge,
            )
            cluster.apply_deployment(spec)
        elif kind == "service":
            _, svc_id, selector, policy = op
            cluster.apply_service(ServiceSpec(service_id=svc_id, selector=selector, policy=policy))
        elif kind == "external-service":
            _, svc_id, endpoint = op
            cluster.apply_service(ServiceSpec(service_id=svc_id, external_endpoint=endpoint))
        elif kind == "advance":
            cluster.advance(op[1])
        elif kind == "converge":
            cluster.converge(max_steps=op[1])
        elif kind == "kill":
            _, dep_id, index = op
            pods = cluster.pods_of(dep_id)
            if index >= len(pods):
                raise UnknownPod(f"deployment {dep_id!r} has no pod at index {index}")
            cluster.kill_pod(pods[index].pod_id)
        elif kind == "update":
            _, dep_id, image_id = op
            cluster.rolling_update(dep_id, image_id)
        elif kind == "scale":
            _, dep_id, replicas = op
            # scale the deployment as the cluster currently knows it, so a
            # scale after an update keeps the updated image
            spec = dataclasses.replace(cluster.deployment_spec(dep_id), replicas=replicas)
            cluster.apply_deployment(spec)
    return cluster
