import re

import pytest

from fdbs import (
    Cluster,
    Coverage,
    DeploymentSpec,
    ImageStore,
    PodTemplate,
    ServiceSpec,
    build_image,
    generate_records,
)
from fdbs.cluster import Phase
from .oracles import replay_pod_trace
from fdbs.errors import (
    ImageNotFound,
    InvalidSpec,
    ServiceUnavailable,
    UnknownPod,
    UnknownService,
    UpdateStalled,
)

COV = Coverage.from_prefixes([str(d) for d in range(10)])


def image_store():
    records = generate_records(30, seed=1)
    store = ImageStore()
    store.register(build_image(records, COV, version=1, image_id="v1"))
    store.register(build_image(records, COV, version=2, image_id="v2"))
    return store


def fresh(replicas=3, seed=5, image="v1", max_unavailable=1, max_surge=1, **cluster_kwargs):
    cluster = Cluster(images=image_store(), seed=seed, **cluster_kwargs)
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id="web",
            replicas=replicas,
            template=PodTemplate(labels={"app": "web"}, image_id=image),
            max_unavailable=max_unavailable,
            max_surge=max_surge,
        )
    )
    cluster.apply_service(ServiceSpec(service_id="svc-web", selector={"app": "web"}))
    cluster.converge()
    return cluster


# --- deployment lifecycle ---


def test_fresh_deployment_converges_to_three_ready_pods():
    cluster = fresh(replicas=3)
    pods = cluster.pods_of("web")
    assert len(pods) == 3
    assert all(cluster.pod_status(p.pod_id).phase == Phase.READY for p in pods)
    assert all(p.labels == {"app": "web"} for p in pods)
    assert cluster.ready_count("web") == 3


def test_pods_become_ready_exactly_after_the_configured_delay():
    for delay in (0, 1, 2, 5):
        cluster = fresh(replicas=2, readiness_delay=delay)
        replay_pod_trace(cluster.trace_lines(), delay, 1)


def test_reapplying_identical_spec_causes_no_churn():
    cluster = fresh()
    before_pods = [p.pod_id for p in cluster.pods_of("web")]
    before_trace = len(cluster.trace_lines())
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id="web",
            replicas=3,
            template=PodTemplate(labels={"app": "web"}, image_id="v1"),
        )
    )
    cluster.converge()
    assert [p.pod_id for p in cluster.pods_of("web")] == before_pods
    assert len(cluster.trace_lines()) == before_trace


def test_scale_up_creates_exactly_the_difference():
    cluster = fresh(replicas=3)
    originals = {p.pod_id for p in cluster.pods_of("web")}
    mark = len(cluster.trace_lines())
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id="web",
            replicas=5,
            template=PodTemplate(labels={"app": "web"}, image_id="v1"),
        )
    )
    cluster.converge()
    created = [l for l in cluster.trace_lines()[mark:] if "\tcreated(" in l]
    assert len(created) == 2
    assert originals <= {p.pod_id for p in cluster.pods_of("web")}
    assert cluster.ready_count("web") == 5


def test_scale_down_terminates_newest_pods_first():
    cluster = fresh(replicas=1)
    (original,) = [p.pod_id for p in cluster.pods_of("web")]

    def rescale(n):
        cluster.apply_deployment(
            DeploymentSpec(
                deployment_id="web",
                replicas=n,
                template=PodTemplate(labels={"app": "web"}, image_id="v1"),
            )
        )
        cluster.converge()

    rescale(3)  # two strictly newer pods join
    assert cluster.ready_count("web") == 3
    rescale(1)  # the newcomers go first; the original stays
    assert [p.pod_id for p in cluster.pods_of("web")] == [original]


def test_apply_deployment_validates_image_and_spec():
    cluster = Cluster(images=image_store())
    with pytest.raises(ImageNotFound):
        cluster.apply_deployment(
            DeploymentSpec(
                deployment_id="x",
                replicas=1,
                template=PodTemplate(labels={}, image_id="missing"),
            )
        )
    with pytest.raises(InvalidSpec):
        DeploymentSpec(
            deployment_id="x",
            replicas=0,
            template=PodTemplate(labels={}, image_id="v1"),
        )
    with pytest.raises(InvalidSpec):
        DeploymentSpec(
            deployment_id="x",
            replicas=1,
            template=PodTemplate(labels={}, image_id="v1"),
            max_unavailable=0,
            max_surge=0,
        )


def test_service_spec_validation():
    with pytest.raises(InvalidSpec):
        ServiceSpec(service_id="s")  # neither selector nor endpoint
    with pytest.raises(InvalidSpec):
        ServiceSpec(service_id="s", selector={"a": "b"}, external_endpoint="engine://x")
    with pytest.raises(InvalidSpec):
        ServiceSpec(service_id="s", selector={"a": "b"}, policy="random")


# --- routing ---


def test_round_robin_cycles_ready_pods_in_pod_id_order():
    cluster = fresh(replicas=3)
    ordered = [cluster.pod_status(p.pod_id).address for p in cluster.pods_of("web")]
    got = [cluster.route("svc-web") for _ in range(6)]
    assert got == ordered * 2


def test_round_robin_skips_non_ready_pods():
    cluster = fresh(replicas=3)
    pods = cluster.pods_of("web")
    # take pod "b" (middle in pod_id order) out of the Ready set
    cluster.kill_pod(pods[1].pod_id)
    a, c = (cluster.pod_status(pods[i].pod_id).address for i in (0, 2))
    got = [cluster.route("svc-web") for _ in range(4)]
    assert got == [a, c, a, c]


def test_least_outstanding_picks_minimum_in_flight():
    cluster = fresh(replicas=3)
    cluster.apply_service(
        ServiceSpec(service_id="svc-web", selector={"app": "web"}, policy="least_outstanding")
    )
    addr_a, addr_b, addr_c = (
        cluster.pod_status(p.pod_id).address for p in cluster.pods_of("web")
    )
    # load a with 2 requests and c with 1
    cluster.begin_request(addr_a)
    cluster.begin_request(addr_a)
    cluster.begin_request(addr_c)
    assert cluster.route("svc-web") == addr_b
    cluster.begin_request(addr_b)
    cluster.begin_request(addr_b)
    # now {a:2, b:2, c:1} -> c
    assert cluster.route("svc-web") == addr_c
    cluster.end_request(addr_a)
    cluster.end_request(addr_a)
    # tie {a:0 ...} resolved by pod_id order
    assert cluster.route("svc-web") == addr_a


def test_external_endpoint_routes_to_registered_target():
    cluster = Cluster(images=image_store())
    sentinel = object()
    cluster.register_endpoint("engine://child", sentinel)
    cluster.apply_service(ServiceSpec(service_id="svc-child", external_endpoint="engine://child"))
    assert cluster.route("svc-child") == "engine://child"
    assert cluster.target_at("engine://child") is sentinel


def test_route_errors():
    cluster = Cluster(images=image_store())
    with pytest.raises(UnknownService):
        cluster.route("nope")
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id="web",
            replicas=1,
            template=PodTemplate(labels={"app": "web"}, image_id="v1"),
        )
    )
    cluster.apply_service(ServiceSpec(service_id="svc-web", selector={"app": "web"}))
    with pytest.raises(ServiceUnavailable):
        cluster.route("svc-web")  # nothing reconciled yet


# --- self-healing ---


def test_killed_pod_is_replaced_with_a_fresh_identity():
    cluster = fresh(replicas=3)
    pods_before = {p.pod_id for p in cluster.pods_of("web")}
    addresses_before = {
        cluster.pod_status(p.pod_id).address for p in cluster.pods_of("web")
    }
    victim = sorted(pods_before)[0]
    kill_step = cluster.step
    cluster.kill_pod(victim)
    cluster.converge()
    pods_after = {p.pod_id for p in cluster.pods_of("web")}
    replacement = (pods_after - pods_before).pop()
    assert victim not in pods_after
    status = cluster.pod_status(replacement)
    assert status.phase == Phase.READY
    assert status.address not in addresses_before
    # created the step after the kill, ready readiness_delay later
    ready_line = next(
        l for l in cluster.trace_lines() if f"pod/{replacement}\tPending->Ready" in l
    )
    assert int(ready_line.split("\t")[0]) == kill_step + 1 + 2
    assert cluster.route("svc-web")  # service still resolves


def test_kill_all_pods_makes_service_unavailable_until_recovery():
    cluster = fresh(replicas=3)
    for pod in cluster.pods_of("web"):
        cluster.kill_pod(pod.pod_id)
    with pytest.raises(ServiceUnavailable):
        cluster.route("svc-web")
    cluster.advance(1)  # replacements created, still pending
    with pytest.raises(ServiceUnavailable):
        cluster.route("svc-web")
    cluster.advance(2)  # readiness delay elapses
    assert cluster.route("svc-web")


def test_kill_unknown_pod_raises():
    cluster = fresh(replicas=1)
    with pytest.raises(UnknownPod):
        cluster.kill_pod("web-zzzzz")
    victim = cluster.pods_of("web")[0].pod_id
    cluster.kill_pod(victim)
    with pytest.raises(UnknownPod):
        cluster.kill_pod(victim)  # already gone


def test_addresses_are_never_reused_across_recreations():
    cluster = fresh(replicas=2)
    seen = set()
    for _ in range(6):
        for pod in cluster.pods_of("web"):
            status = cluster.pod_status(pod.pod_id)
            if status.phase == Phase.READY:
                assert status.address is not None
                seen.add((pod.pod_id, status.address))
        cluster.kill_pod(cluster.pods_of("web")[0].pod_id)
        cluster.converge()
    addresses = [a for (_, a) in seen]
    assert len(addresses) == len(set(addresses))
    # 2 originals + a replacement per kill except the unsnapshotted last one
    assert len(addresses) >= 7


# --- rolling updates ---


def test_rolling_update_availability_floor_and_final_state():
    cluster = fresh(replicas=3, max_unavailable=1)
    start = cluster.step
    report = cluster.rolling_update("web", "v2")
    assert not report.no_op
    assert (report.old_image_id, report.new_image_id) == ("v1", "v2")
    ready_by_step = replay_pod_trace(cluster.trace_lines(), 2, 1)
    for step, ready in ready_by_step.items():
        if step > start:
            assert ready >= 2, f"step {step}: only {ready} Ready"
    statuses = [cluster.pod_status(p.pod_id) for p in cluster.pods_of("web")]
    assert [s.image_version for s in statuses] == [2, 2, 2]
    assert report.steps_taken <= 3 * (2 + 2)  # replicas * (delay + slack)


def test_rolling_update_to_same_image_is_a_no_op():
    cluster = fresh()
    before = len(cluster.trace_lines())
    report = cluster.rolling_update("web", "v1")
    assert report.no_op and report.steps_taken == 0
    assert len(cluster.trace_lines()) == before


def test_surge_only_update_brings_new_pod_up_before_taking_old_down():
    cluster = fresh(replicas=1, max_unavailable=0, max_surge=1)
    (old_pod,) = [p.pod_id for p in cluster.pods_of("web")]
    mark = len(cluster.trace_lines())
    cluster.rolling_update("web", "v2")
    tail = cluster.trace_lines()[mark:]
    new_ready = next(i for i, l in enumerate(tail) if l.endswith("Pending->Ready"))
    old_down = next(i for i, l in enumerate(tail) if f"pod/{old_pod}\tReady->Terminating" in l)
    assert new_ready < old_down
    ready_by_step = replay_pod_trace(cluster.trace_lines(), 2, 1)
    assert min(v for s, v in ready_by_step.items() if s > 3) >= 1


def test_kill_during_rolling_update_still_converges():
    cluster = fresh(replicas=3)
    killed = []

    def chaos(c):
        if c.step == c._update_chaos_step and not killed:
            victims = [p for p in c.pods_of("web")]
            killed.append(c.kill_pod(victims[-1].pod_id))

    cluster._update_chaos_step = cluster.step + 2
    report = cluster.rolling_update("web", "v2", on_step=chaos)
    assert killed and not report.no_op
    assert cluster.ready_count("web") == 3
    assert all(
        cluster.pod_status(p.pod_id).image_version == 2 for p in cluster.pods_of("web")
    )


def test_update_stalls_when_pods_cannot_become_ready_in_time():
    cluster = fresh(replicas=2, readiness_delay=0)
    cluster.readiness_delay = 50  # new pods now take 50 steps to come up
    with pytest.raises(UpdateStalled):
        cluster.rolling_update("web", "v2", timeout=5)


def test_update_unknown_deployment_and_missing_image():
    cluster = fresh()
    with pytest.raises(ImageNotFound):
        cluster.rolling_update("web", "v9")
    from fdbs.errors import UnknownDeployment

    with pytest.raises(UnknownDeployment):
        cluster.rolling_update("nope", "v2")


# --- simulation driver ---


def test_advance_zero_is_identity():
    cluster = fresh()
    assert cluster.advance(0) == []


def test_advance_returns_the_transitions_it_caused():
    cluster = Cluster(images=image_store(), seed=3)
    cluster.apply_deployment(
        DeploymentSpec(
            deployment_id="web",
            replicas=2,
            template=PodTemplate(labels={"app": "web"}, image_id="v1"),
        )
    )
    first = cluster.advance(1)
    assert len(first) == 2 and all("created" in t.transition for t in first)
    second = cluster.advance(2)
    assert sum(1 for t in second if t.transition == "Pending->Ready") == 2


def test_trace_line_format():
    cluster = fresh()
    pattern = re.compile(r"^\d+\t(pod|deployment|service)/\S+\t\S+$")
    for line in cluster.trace_lines():
        assert pattern.match(line), line


def test_identical_seed_and_ops_give_identical_traces():
    def run():
        cluster = fresh(replicas=3, seed=11)
        cluster.kill_pod(cluster.pods_of("web")[1].pod_id)
        cluster.converge()
        cluster.rolling_update("web", "v2")
        return cluster.trace_lines()

    assert run() == run()


def test_different_seeds_give_different_pod_names():
    a = {p.pod_id for p in fresh(seed=1).pods_of("web")}
    b = {p.pod_id for p in fresh(seed=2).pods_of("web")}
    assert a != b
