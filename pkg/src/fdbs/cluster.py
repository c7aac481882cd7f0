"""In-process orchestration simulator: ephemeral pods behind stable services,
declarative deployments, rolling updates, and failure injection.

Time is a discrete step counter advanced explicitly by the caller, so every
claim about convergence, availability floors, and self-healing is checkable
against a byte-reproducible transition trace.  Each step runs two phases:
pod lifecycle (Pending pods whose readiness delay elapsed become Ready,
Terminating pods become Gone), then one reconciliation pass per deployment
in deployment-id order.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping

from .backend import ShardBackend
from .errors import (
    ImageNotFound,
    InvalidSpec,
    ServiceUnavailable,
    UnknownDeployment,
    UnknownPod,
    UnknownService,
    UpdateStalled,
)
from .image import ShardImage

ROUND_ROBIN = "round_robin"
LEAST_OUTSTANDING = "least_outstanding"

CONTAINERS = ("db", "api")


class Phase(str, Enum):
    PENDING = "Pending"
    READY = "Ready"
    TERMINATING = "Terminating"
    GONE = "Gone"


@dataclass(frozen=True)
class PodTemplate:
    labels: Mapping[str, str]
    image_id: str


@dataclass(frozen=True)
class PodSpec:
    pod_id: str
    labels: Mapping[str, str]
    image_id: str
    containers: tuple[str, str] = CONTAINERS


@dataclass(frozen=True)
class PodStatus:
    phase: Phase
    image_version: int
    address: str


@dataclass(frozen=True)
class ServiceSpec:
    service_id: str
    selector: Mapping[str, str] | None = None
    policy: str = ROUND_ROBIN
    external_endpoint: str | None = None

    def __post_init__(self):
        if (self.selector is None) == (self.external_endpoint is None):
            raise InvalidSpec("service needs exactly one of selector or external_endpoint")
        if self.policy not in (ROUND_ROBIN, LEAST_OUTSTANDING):
            raise InvalidSpec(f"unknown route policy {self.policy!r}")


@dataclass(frozen=True)
class DeploymentSpec:
    deployment_id: str
    replicas: int
    template: PodTemplate
    max_unavailable: int = 1
    max_surge: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise InvalidSpec(f"replicas must be >= 1, got {self.replicas}")
        if self.max_unavailable < 0 or self.max_surge < 0:
            raise InvalidSpec("max_unavailable and max_surge must be >= 0")
        if self.max_unavailable + self.max_surge < 1:
            raise InvalidSpec("max_unavailable + max_surge must be >= 1 for progress")


@dataclass(frozen=True)
class Transition:
    step: int
    entity: str
    transition: str

    def to_line(self) -> str:
        return f"{self.step}\t{self.entity}\t{self.transition}"


@dataclass
class UpdateReport:
    deployment_id: str
    old_image_id: str
    new_image_id: str
    no_op: bool
    steps_taken: int
    transitions: list[Transition]


class ImageStore:
    """Registry of loadable shard images, keyed by image id."""

    def __init__(self, images: Iterable[ShardImage] = ()):
        self._images: dict[str, ShardImage] = {}
        for image in images:
            self.register(image)

    def register(self, image: ShardImage) -> None:
        self._images[image.image_id] = image

    def get(self, image_id: str) -> ShardImage:
        try:
            return self._images[image_id]
        except KeyError:
            raise ImageNotFound(f"no image registered under {image_id!r}") from None

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._images


class _Pod:
    def __init__(self, pod_id: str, template: PodTemplate, address: str, created_step: int, ready_at: int):
        self.pod_id = pod_id
        self.labels = dict(template.labels)
        self.image_id = template.image_id
        self.address = address
        self.created_step = created_step
        self.ready_at = ready_at
        self.phase = Phase.PENDING
        self.backend: ShardBackend | None = None
        self.in_flight = 0

    def spec(self) -> PodSpec:
        return PodSpec(pod_id=self.pod_id, labels=dict(self.labels), image_id=self.image_id)

    def status(self, images: ImageStore) -> PodStatus:
        version = self.backend.image_version if self.backend else images.get(self.image_id).version
        return PodStatus(phase=self.phase, image_version=version, address=self.address)

    def matches(self, selector: Mapping[str, str]) -> bool:
        return all(self.labels.get(k) == v for k, v in selector.items())


_ID_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"


class Cluster:
    """Single logical state machine; mutations flow through the caller-driven
    step loop, reads take a consistent snapshot under one lock."""

    def __init__(
        self,
        images: ImageStore | None = None,
        readiness_delay: int = 2,
        termination_delay: int = 1,
        seed: int = 0,
        update_timeout: int = 100,
    ):
        self.images = images if images is not None else ImageStore()
        self.readiness_delay = readiness_delay
        self.termination_delay = termination_delay
        self.update_timeout = update_timeout
        self.step = 0
        self.trace: list[Transition] = []
        self._lock = threading.RLock()
        self._rng = random.Random(seed)
        self._pods: dict[str, _Pod] = {}
        self._by_address: dict[str, _Pod] = {}
        self._services: dict[str, ServiceSpec] = {}
        self._deployments: dict[str, DeploymentSpec] = {}
        self._rr_cursor: dict[str, int] = {}
        self._endpoints: dict[str, object] = {}
        self._gone_at: dict[str, int] = {}
        self._used_addresses: set[str] = set()

    # --- declarative objects ---

    def apply_deployment(self, spec: DeploymentSpec) -> str:
        with self._lock:
            self.images.get(spec.template.image_id)
            previous = self._deployments.get(spec.deployment_id)
            self._deployments[spec.deployment_id] = spec
            if previous != spec:
                self._log(
                    f"deployment/{spec.deployment_id}",
                    f"applied(replicas={spec.replicas},image={spec.template.image_id})",
                )
            return spec.deployment_id

    def apply_service(self, spec: ServiceSpec) -> str:
        with self._lock:
            previous = self._services.get(spec.service_id)
            self._services[spec.service_id] = spec
            if previous != spec:
                detail = (
                    f"external={spec.external_endpoint}"
                    if spec.external_endpoint is not None
                    else "selector=" + ",".join(f"{k}={v}" for k, v in sorted(spec.selector.items()))
                )
                self._log(f"service/{spec.service_id}", f"applied({detail})")
            return spec.service_id

    def register_endpoint(self, address: str, target: object) -> None:
        """Map an external address to a query target (the manual-endpoint
        pattern that lets a nested federation stand behind a service)."""
        with self._lock:
            self._endpoints[address] = target

    # --- failure injection ---

    def kill_pod(self, pod_id: str) -> str:
        with self._lock:
            pod = self._pods.get(pod_id)
            if pod is None or pod.phase is Phase.GONE:
                raise UnknownPod(f"no live pod {pod_id!r}")
            self._log(f"pod/{pod_id}", f"{pod.phase.value}->Gone(killed)")
            self._mark_gone(pod)
            return pod_id

    # --- simulation driver ---

    def advance(self, steps: int) -> list[Transition]:
        """Run the reconciliation loop for ``steps`` discrete steps."""
        out: list[Transition] = []
        with self._lock:
            for _ in range(steps):
                self.step += 1
                out.extend(self._lifecycle())
                for dep_id in sorted(self._deployments):
                    out.extend(self._reconcile(self._deployments[dep_id]))
        return out

    def converge(self, max_steps: int = 100) -> list[Transition]:
        out: list[Transition] = []
        with self._lock:
            for _ in range(max_steps):
                if self.converged():
                    return out
                out.extend(self.advance(1))
            if not self.converged():
                raise UpdateStalled(f"cluster did not converge within {max_steps} steps")
        return out

    def converged(self, deployment_id: str | None = None) -> bool:
        with self._lock:
            ids = [deployment_id] if deployment_id else sorted(self._deployments)
            for dep_id in ids:
                spec = self._deployments.get(dep_id)
                if spec is None:
                    raise UnknownDeployment(f"no deployment {dep_id!r}")
                owned = [p for p in self._pods.values() if p.pod_id.startswith(dep_id + "-")]
                live = [p for p in owned if p.phase in (Phase.PENDING, Phase.READY)]
                if any(p.phase is Phase.TERMINATING for p in owned):
                    return False
                if len(live) != spec.replicas:
                    return False
                if any(p.phase is not Phase.READY or p.image_id != spec.template.image_id for p in live):
                    return False
            return True

    def rolling_update(
        self,
        deployment_id: str,
        new_image_id: str,
        on_step: Callable[["Cluster"], None] | None = None,
        timeout: int | None = None,
    ) -> UpdateReport:
        """Replace a converged deployment's pods batch by batch.

        ``on_step`` runs after every simulation step, letting callers issue
        reads or inject faults mid-update.
        """
        with self._lock:
            spec = self._deployments.get(deployment_id)
            if spec is None:
                raise UnknownDeployment(f"no deployment {deployment_id!r}")
            self.images.get(new_image_id)
            old_image_id = spec.template.image_id
            if old_image_id == new_image_id and self.converged(deployment_id):
                return UpdateReport(deployment_id, old_image_id, new_image_id, True, 0, [])
            self._log(f"deployment/{deployment_id}", f"update({old_image_id}->{new_image_id})")
            self.apply_deployment(replace(spec, template=replace(spec.template, image_id=new_image_id)))
        budget = timeout if timeout is not None else self.update_timeout
        transitions: list[Transition] = []
        for step_count in range(1, budget + 1):
            transitions.extend(self.advance(1))
            if on_step is not None:
                on_step(self)
            if self.converged(deployment_id):
                return UpdateReport(
                    deployment_id, old_image_id, new_image_id, False, step_count, transitions
                )
        raise UpdateStalled(
            f"deployment {deployment_id!r} did not converge within {budget} steps"
        )

    # --- routing ---

    def route(self, service_id: str, request: object = None) -> str:
        with self._lock:
            svc = self._services.get(service_id)
            if svc is None:
                raise UnknownService(f"no service {service_id!r}")
            if svc.external_endpoint is not None:
                return svc.external_endpoint
            ready = sorted(
                (
                    p
                    for p in self._pods.values()
                    if p.phase is Phase.READY and p.matches(svc.selector)
                ),
                key=lambda p: p.pod_id,
            )
            if not ready:
                raise ServiceUnavailable(f"service {service_id!r} has no Ready pod")
            if svc.policy == ROUND_ROBIN:
                cursor = self._rr_cursor.get(service_id, 0)
                self._rr_cursor[service_id] = cursor + 1
                return ready[cursor % len(ready)].address
            return min(ready, key=lambda p: (p.in_flight, p.pod_id)).address

    def target_at(self, address: str):
        with self._lock:
            pod = self._by_address.get(address)
            if pod is not None:
                if pod.phase is not Phase.READY or pod.backend is None:
                    raise ServiceUnavailable(f"pod at {address} is {pod.phase.value}")
                return pod.backend
            target = self._endpoints.get(address)
            if target is None:
                raise ServiceUnavailable(f"nothing serves address {address!r}")
            return target

    def begin_request(self, address: str) -> None:
        with self._lock:
            pod = self._by_address.get(address)
            if pod is not None:
                pod.in_flight += 1

    def end_request(self, address: str) -> None:
        with self._lock:
            pod = self._by_address.get(address)
            if pod is not None and pod.in_flight > 0:
                pod.in_flight -= 1

    # --- introspection ---

    def deployment_spec(self, deployment_id: str) -> DeploymentSpec:
        with self._lock:
            spec = self._deployments.get(deployment_id)
            if spec is None:
                raise UnknownDeployment(f"no deployment {deployment_id!r}")
            return spec

    def pod_status(self, pod_id: str) -> PodStatus:
        with self._lock:
            pod = self._pods.get(pod_id)
            if pod is None:
                raise UnknownPod(f"no pod {pod_id!r}")
            return pod.status(self.images)

    def pods_of(self, deployment_id: str) -> list[PodSpec]:
        with self._lock:
            return [
                p.spec()
                for p in sorted(self._pods.values(), key=lambda p: p.pod_id)
                if p.pod_id.startswith(deployment_id + "-") and p.phase is not Phase.GONE
            ]

    def ready_count(self, deployment_id: str) -> int:
        with self._lock:
            return sum(
                1
                for p in self._pods.values()
                if p.pod_id.startswith(deployment_id + "-") and p.phase is Phase.READY
            )

    def service_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._services)

    def trace_lines(self) -> list[str]:
        with self._lock:
            return [t.to_line() for t in self.trace]

    # --- internals ---

    def _log(self, entity: str, transition: str) -> Transition:
        t = Transition(self.step, entity, transition)
        self.trace.append(t)
        return t

    def _mark_gone(self, pod: _Pod) -> None:
        pod.phase = Phase.GONE
        pod.backend = None
        self._by_address.pop(pod.address, None)
        self._gone_at[pod.pod_id] = self.step

    def _new_pod(self, deployment_id: str, template: PodTemplate) -> _Pod:
        while True:
            suffix = "".join(self._rng.choice(_ID_ALPHABET) for _ in range(5))
            pod_id = f"{deployment_id}-{suffix}"
            if pod_id not in self._pods:
                break
        while True:
            address = (
                f"10.{self._rng.randrange(256)}.{self._rng.randrange(256)}"
                f".{self._rng.randrange(1, 255)}:8080"
            )
            if address not in self._used_addresses:
                break
        self._used_addresses.add(address)
        ready_at = self.step + self.readiness_delay
        pod = _Pod(pod_id, template, address, self.step, ready_at)
        self._pods[pod_id] = pod
        self._by_address[address] = pod
        self._log(f"pod/{pod_id}", f"created(image={template.image_id})")
        if self.readiness_delay == 0:
            self._make_ready(pod)
        return pod

    def _make_ready(self, pod: _Pod) -> None:
        pod.backend = ShardBackend(self.images.get(pod.image_id))
        pod.phase = Phase.READY
        self._log(f"pod/{pod.pod_id}", "Pending->Ready")

    def _terminate(self, pod: _Pod) -> None:
        self._log(f"pod/{pod.pod_id}", f"{pod.phase.value}->Terminating")
        pod.phase = Phase.TERMINATING
        pod.backend = None
        self._by_address.pop(pod.address, None)
        self._gone_at[pod.pod_id] = self.step + self.termination_delay

    def _lifecycle(self) -> list[Transition]:
        out: list[Transition] = []
        for pod in sorted(self._pods.values(), key=lambda p: p.pod_id):
            if pod.phase is Phase.PENDING and pod.ready_at <= self.step:
                self._make_ready(pod)
                out.append(self.trace[-1])
            elif pod.phase is Phase.TERMINATING and self._gone_at.get(pod.pod_id, 0) <= self.step:
                self._log(f"pod/{pod.pod_id}", "Terminating->Gone")
                self._mark_gone(pod)
                out.append(self.trace[-1])
        return out

    def _reconcile(self, spec: DeploymentSpec) -> list[Transition]:
        before = len(self.trace)
        owned = [
            p
            for p in self._pods.values()
            if p.pod_id.startswith(spec.deployment_id + "-")
            and p.phase in (Phase.PENDING, Phase.READY)
        ]
        target_image = spec.template.image_id
        current = [p for p in owned if p.image_id == target_image]
        outdated = [p for p in owned if p.image_id != target_image]

        # create replacements within the surge budget
        total_cap = spec.replicas + (spec.max_surge if outdated else 0)
        want = min(spec.replicas - len(current), total_cap - len(owned))
        for _ in range(max(0, want)):
            current.append(self._new_pod(spec.deployment_id, spec.template))
            owned.append(current[-1])

        # scale down pure excess (newest first) outside of updates
        if not outdated and len(current) > spec.replicas:
            excess = sorted(current, key=lambda p: (p.created_step, p.pod_id), reverse=True)
            for pod in excess[: len(current) - spec.replicas]:
                self._terminate(pod)

        # retire outdated pods without dropping below the availability floor
        if outdated:
            for pod in [p for p in outdated if p.phase is Phase.PENDING]:
                self._terminate(pod)
                outdated.remove(pod)
            floor = spec.replicas - spec.max_unavailable
            ready_total = sum(1 for p in owned if p.phase is Phase.READY)
            budget = ready_total - floor
            victims = sorted(
                (p for p in outdated if p.phase is Phase.READY),
                key=lambda p: (p.created_step, p.pod_id),
            )
            for pod in victims[: max(0, budget)]:
                self._terminate(pod)
        return self.trace[before:]
