"""Scenario documents and federation topology.

A scenario is a YAML document describing the whole federation: clusters and
their node shapes, the inter-cluster link matrices, the two-stage service
pipeline, the open-loop workload, and a fault timeline. This module owns the
full document lifecycle:

  * ``parse_scenario`` / ``load_scenario``: strict YAML -> ``FederationSpec``
    (unknown fields, missing required fields, and shape mismatches are
    rejected with field paths; syntax errors carry the document position).
  * ``render_scenario``: ``FederationSpec`` -> canonical YAML. Rendering a
    parsed document and parsing it again yields an equal spec.
  * ``validate``: semantic checks over the spec, collecting every violation
    before failing, and resolution into a ``ValidatedTopology`` with cluster
    indices assigned in declaration order.
  * ``build_runtime``: construct the discrete-event engine for a validated
    topology. The returned engine has an empty event queue; priming happens
    on the first ``run``.

Scenario-level units are operator-friendly (milliseconds, ms per kB with
1 kB = 1000 bytes); conversion to engine units (seconds, bytes) happens once
during validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from . import faults
from .mesh import POLICIES, ROUND_ROBIN
from .netem import JITTER_DISTS, JITTER_NONE, JitterSpec, LossSpec
from .workload import (
    ARRIVAL_CONSTANT,
    ARRIVAL_KINDS,
    EMPIRICAL_MODES,
    EMPIRICAL_UNIFORM,
    PAYLOAD_CONSTANT,
    PAYLOAD_DISTS,
    PAYLOAD_EMPIRICAL,
    PAYLOAD_LOGNORMAL,
    STAGE_BACKEND,
    STAGE_FRONTEND,
    STAGES,
    PayloadSpec,
    Phase,
    StageProfile,
    WorkloadSpec,
)

ROLE_EDGE = "edge"
ROLE_DATACENTER = "datacenter"
ROLES = (ROLE_EDGE, ROLE_DATACENTER)

DEFAULT_SCRAPE_INTERVAL_S = 5.0
DEFAULT_TIMEOUT_S = 5.0
DEFAULT_RATE_WINDOW_S = 60.0
DEFAULT_PAYLOAD_BYTES = 250_000

# Default stage demand: frontend detect-and-crop, backend recognition.
DEFAULT_FRONTEND_BASE_MS = 20.0
DEFAULT_FRONTEND_PER_KB_MS = 0.01
DEFAULT_REDUCTION = 1.0 / 3.0
DEFAULT_BACKEND_BASE_MS = 80.0
DEFAULT_BACKEND_PER_KB_MS = 0.02


class ScenarioError(Exception):
    """Raised on malformed scenario documents (syntax or structure)."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ValidationError(Exception):
    """Raised by ``validate`` with the complete list of semantic violations."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ClusterSpec:
    """One member cluster.

    Attributes:
        name: Unique cluster name.
        nodes: Worker node count.
        vcpus_per_node: vCPUs each node contributes.
        memory_gb: Memory per node; descriptive, not a scheduling constraint.
        role: ``edge`` or ``datacenter``.
    """

    name: str
    nodes: int = 1
    vcpus_per_node: int = 1
    memory_gb: float = 8.0
    role: str = ROLE_EDGE


@dataclass(frozen=True)
class LinksSpec:
    """Inter-cluster link matrices, indexed by cluster declaration order.

    ``one_way_delay_ms[i][j]`` is the configured one-way delay injected on
    traffic from cluster i to cluster j. ``base_delay_ms`` is the fixed
    per-traversal cost of reaching the gateway (applied on every
    gateway-mediated hop in either direction); ``intra_base_delay_ms`` is the
    in-cluster hop cost.
    """

    one_way_delay_ms: tuple[tuple[float, ...], ...]
    jitter: tuple[tuple[JitterSpec, ...], ...]
    loss: tuple[tuple[LossSpec, ...], ...]
    base_delay_ms: float = 0.0
    intra_base_delay_ms: float = 0.0


@dataclass(frozen=True)
class DemandSpec:
    """Stage demand in scenario units: ms base plus ms per kB of stage input."""

    base_ms: float
    per_kb_ms: float
    reduction: float = 1.0


@dataclass(frozen=True)
class ServiceSpec:
    """One pipeline stage service and its replica placement."""

    name: str
    stage: str
    replicas_per_cluster: dict[str, int]
    demand: DemandSpec
    backend_policy: str | None = None


@dataclass(frozen=True)
class FederationSpec:
    """Parsed scenario document, prior to semantic validation."""

    clusters: tuple[ClusterSpec, ...]
    links: LinksSpec
    services: tuple[ServiceSpec, ...]
    workload: WorkloadSpec
    timeline: tuple[faults.TimelineEvent, ...]
    seed: int = 0
    duration_s: float = 0.0
    scrape_interval_s: float = DEFAULT_SCRAPE_INTERVAL_S
    timeout_s: float = DEFAULT_TIMEOUT_S
    rate_window_s: float = DEFAULT_RATE_WINDOW_S


@dataclass(frozen=True)
class ResolvedService:
    """Service with placements resolved to cluster indices and demand in
    engine units."""

    name: str
    stage: str
    placements: tuple[tuple[int, int], ...]
    profile: StageProfile


@dataclass(frozen=True)
class ValidatedTopology:
    """Semantically valid federation, ready for ``build_runtime``."""

    spec: FederationSpec
    clusters: tuple[ClusterSpec, ...]
    index_of: dict[str, int]
    links: LinksSpec
    services: tuple[ResolvedService, ...]
    frontend: ResolvedService | None
    backend: ResolvedService | None
    backend_policy: str
    workload: WorkloadSpec
    timeline: tuple[faults.TimelineEvent, ...]
    seed: int
    duration_s: float
    scrape_interval_s: float
    timeout_s: float
    rate_window_s: float


_TOP_KEYS = {
    "clusters",
    "links",
    "services",
    "workload",
    "timeline",
    "seed",
    "duration_s",
    "scrape_interval_s",
    "timeout_s",
    "rate_window_s",
}


def _fail(message: str):
    raise ScenarioError([message])


def _as_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(f"{path}: expected a mapping")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        _fail(f"{path}: expected a list")
    return value


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        _fail(f"{path}: expected a string")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        _fail(f"{path}: expected a boolean")
    return value


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{path}: expected an integer")
    return value


def _as_num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}: expected a number")
    return float(value)


def _check_keys(mapping: dict, allowed: set[str], path: str) -> None:
    unknown = [key for key in mapping if key not in allowed]
    if unknown:
        listed = ", ".join(f"'{key}'" for key in sorted(map(str, unknown)))
        _fail(f"{path}: unknown field {listed}")


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        _fail(f"{path}: missing required field '{key}'")
    return mapping[key]


def parse_scenario(text: str) -> FederationSpec:
    """Parse a scenario document. Raises ScenarioError on syntax errors,
    unknown fields, missing required fields, or shape mismatches."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ScenarioError([f"syntax error{where}: {problem}"]) from exc
    if doc is None:
        doc = {}
    doc = _as_map(doc, "document")
    _check_keys(doc, _TOP_KEYS, "document")

    clusters = _parse_clusters(_require(doc, "clusters", "document"))
    names = [cluster.name for cluster in clusters]
    links = _parse_links(doc.get("links", {}), names)
    services = _parse_services(doc.get("services", []), names)
    workload_spec = _parse_workload(doc.get("workload", {}))
    timeline = _parse_timeline(doc.get("timeline", []))
    duration_s = _as_num(_require(doc, "duration_s", "document"), "duration_s")

    return FederationSpec(
        clusters=clusters,
        links=links,
        services=services,
        workload=workload_spec,
        timeline=timeline,
        seed=_as_int(doc.get("seed", 0), "seed"),
        duration_s=duration_s,
        scrape_interval_s=_as_num(doc.get("scrape_interval_s", DEFAULT_SCRAPE_INTERVAL_S), "scrape_interval_s"),
        timeout_s=_as_num(doc.get("timeout_s", DEFAULT_TIMEOUT_S), "timeout_s"),
        rate_window_s=_as_num(doc.get("rate_window_s", DEFAULT_RATE_WINDOW_S), "rate_window_s"),
    )


def _parse_clusters(value) -> tuple[ClusterSpec, ...]:
    items = _as_list(value, "clusters")
    if not items:
        _fail("clusters: at least one cluster required")
    clusters = []
    for k, item in enumerate(items):
        path = f"clusters[{k}]"
        entry = _as_map(item, path)
        _check_keys(entry, {"name", "nodes", "vcpus_per_node", "memory_gb", "role"}, path)
        clusters.append(
            ClusterSpec(
                name=_as_str(_require(entry, "name", path), f"{path}.name"),
                nodes=_as_int(entry.get("nodes", 1), f"{path}.nodes"),
                vcpus_per_node=_as_int(entry.get("vcpus_per_node", 1), f"{path}.vcpus_per_node"),
                memory_gb=_as_num(entry.get("memory_gb", 8.0), f"{path}.memory_gb"),
                role=_as_str(entry.get("role", ROLE_EDGE), f"{path}.role"),
            )
        )
    return tuple(clusters)


def _parse_matrix(value, n: int, path: str) -> tuple[tuple[float, ...], ...]:
    rows = _as_list(value, path)
    if len(rows) != n:
        _fail(f"{path}: expected {n} rows, got {len(rows)}")
    matrix = []
    for i, row in enumerate(rows):
        row = _as_list(row, f"{path}[{i}]")
        if len(row) != n:
            _fail(f"{path}[{i}]: expected {n} entries, got {len(row)}")
        matrix.append(tuple(_as_num(cell, f"{path}[{i}][{j}]") for j, cell in enumerate(row)))
    return tuple(matrix)


def _pair_index(entry: dict, names: list[str], path: str) -> tuple[int, int]:
    src = _as_str(_require(entry, "src", path), f"{path}.src")
    dst = _as_str(_require(entry, "dst", path), f"{path}.dst")
    for field_name, name in (("src", src), ("dst", dst)):
        if name not in names:
            _fail(f"{path}.{field_name}: unknown cluster '{name}'")
    return names.index(src), names.index(dst)


def _parse_links(value, names: list[str]) -> LinksSpec:
    n = len(names)
    entry = _as_map(value, "links")
    _check_keys(
        entry,
        {"one_way_delay_ms", "jitter", "loss", "base_delay_ms", "intra_base_delay_ms"},
        "links",
    )
    if "one_way_delay_ms" in entry:
        delay = _parse_matrix(entry["one_way_delay_ms"], n, "links.one_way_delay_ms")
    else:
        delay = tuple(tuple(0.0 for _ in range(n)) for _ in range(n))

    jitter_rows = [[JitterSpec() for _ in range(n)] for _ in range(n)]
    for k, item in enumerate(_as_list(entry.get("jitter", []), "links.jitter")):
        path = f"links.jitter[{k}]"
        cell = _as_map(item, path)
        _check_keys(cell, {"src", "dst", "dist", "scale_ms"}, path)
        i, j = _pair_index(cell, names, path)
        jitter_rows[i][j] = JitterSpec(
            dist=_as_str(_require(cell, "dist", path), f"{path}.dist"),
            scale_ms=_as_num(cell.get("scale_ms", 0.0), f"{path}.scale_ms"),
        )

    loss_rows = [[LossSpec() for _ in range(n)] for _ in range(n)]
    for k, item in enumerate(_as_list(entry.get("loss", []), "links.loss")):
        path = f"links.loss[{k}]"
        cell = _as_map(item, path)
        _check_keys(cell, {"src", "dst", "p", "correlation"}, path)
        i, j = _pair_index(cell, names, path)
        loss_rows[i][j] = LossSpec(
            p=_as_num(_require(cell, "p", path), f"{path}.p"),
            correlation=_as_num(cell.get("correlation", 0.0), f"{path}.correlation"),
        )

    return LinksSpec(
        one_way_delay_ms=delay,
        jitter=tuple(tuple(row) for row in jitter_rows),
        loss=tuple(tuple(row) for row in loss_rows),
        base_delay_ms=_as_num(entry.get("base_delay_ms", 0.0), "links.base_delay_ms"),
        intra_base_delay_ms=_as_num(entry.get("intra_base_delay_ms", 0.0), "links.intra_base_delay_ms"),
    )


def _default_demand(stage: str) -> DemandSpec:
    if stage == STAGE_BACKEND:
        return DemandSpec(DEFAULT_BACKEND_BASE_MS, DEFAULT_BACKEND_PER_KB_MS, 1.0)
    return DemandSpec(DEFAULT_FRONTEND_BASE_MS, DEFAULT_FRONTEND_PER_KB_MS, DEFAULT_REDUCTION)


def _parse_services(value, names: list[str]) -> tuple[ServiceSpec, ...]:
    services = []
    for k, item in enumerate(_as_list(value, "services")):
        path = f"services[{k}]"
        entry = _as_map(item, path)
        _check_keys(entry, {"name", "stage", "replicas_per_cluster", "demand", "backend_policy"}, path)
        stage = _as_str(_require(entry, "stage", path), f"{path}.stage")
        defaults = _default_demand(stage)

        demand_doc = _as_map(entry.get("demand", {}), f"{path}.demand")
        _check_keys(demand_doc, {"base_ms", "per_kb_ms", "reduction"}, f"{path}.demand")
        demand = DemandSpec(
            base_ms=_as_num(demand_doc.get("base_ms", defaults.base_ms), f"{path}.demand.base_ms"),
            per_kb_ms=_as_num(demand_doc.get("per_kb_ms", defaults.per_kb_ms), f"{path}.demand.per_kb_ms"),
            reduction=_as_num(demand_doc.get("reduction", defaults.reduction), f"{path}.demand.reduction"),
        )

        placement_doc = _as_map(_require(entry, "replicas_per_cluster", path), f"{path}.replicas_per_cluster")
        placements = {}
        for cluster_name, count in placement_doc.items():
            cluster_name = _as_str(cluster_name, f"{path}.replicas_per_cluster key")
            placements[cluster_name] = _as_int(count, f"{path}.replicas_per_cluster['{cluster_name}']")

        policy = entry.get("backend_policy")
        services.append(
            ServiceSpec(
                name=_as_str(_require(entry, "name", path), f"{path}.name"),
                stage=stage,
                replicas_per_cluster=placements,
                demand=demand,
                backend_policy=None if policy is None else _as_str(policy, f"{path}.backend_policy"),
            )
        )
    return tuple(services)


def _parse_workload(value) -> WorkloadSpec:
    entry = _as_map(value, "workload")
    _check_keys(entry, {"arrival", "payload", "phases"}, "workload")

    payload_doc = _as_map(entry.get("payload", {}), "workload.payload")
    _check_keys(payload_doc, {"dist", "bytes", "mu", "sigma", "values", "mode"}, "workload.payload")
    dist = _as_str(payload_doc.get("dist", PAYLOAD_CONSTANT), "workload.payload.dist")
    payload = PayloadSpec(
        dist=dist,
        bytes=_as_int(payload_doc.get("bytes", DEFAULT_PAYLOAD_BYTES), "workload.payload.bytes"),
        mu=_as_num(payload_doc.get("mu", 0.0), "workload.payload.mu"),
        sigma=_as_num(payload_doc.get("sigma", 0.0), "workload.payload.sigma"),
        values=tuple(
            _as_int(v, f"workload.payload.values[{i}]")
            for i, v in enumerate(_as_list(payload_doc.get("values", []), "workload.payload.values"))
        ),
        mode=_as_str(payload_doc.get("mode", EMPIRICAL_UNIFORM), "workload.payload.mode"),
    )

    phases = []
    for k, item in enumerate(_as_list(entry.get("phases", []), "workload.phases")):
        path = f"workload.phases[{k}]"
        phase = _as_map(item, path)
        _check_keys(phase, {"rate", "duration_s"}, path)
        phases.append(
            Phase(
                rate=_as_num(_require(phase, "rate", path), f"{path}.rate"),
                duration_s=_as_num(_require(phase, "duration_s", path), f"{path}.duration_s"),
            )
        )

    return WorkloadSpec(
        phases=tuple(phases),
        arrival=_as_str(entry.get("arrival", ARRIVAL_CONSTANT), "workload.arrival"),
        payload=payload,
    )


def _parse_jitter_block(value, path: str) -> JitterSpec:
    entry = _as_map(value, path)
    _check_keys(entry, {"dist", "scale_ms"}, path)
    return JitterSpec(
        dist=_as_str(entry.get("dist", JITTER_NONE), f"{path}.dist"),
        scale_ms=_as_num(entry.get("scale_ms", 0.0), f"{path}.scale_ms"),
    )


def _parse_loss_block(value, path: str) -> LossSpec:
    entry = _as_map(value, path)
    _check_keys(entry, {"p", "correlation"}, path)
    return LossSpec(
        p=_as_num(entry.get("p", 0.0), f"{path}.p"),
        correlation=_as_num(entry.get("correlation", 0.0), f"{path}.correlation"),
    )


def _parse_timeline(value) -> tuple[faults.TimelineEvent, ...]:
    events = []
    for k, item in enumerate(_as_list(value, "timeline")):
        path = f"timeline[{k}]"
        entry = _as_map(item, path)
        action = _as_str(_require(entry, "action", path), f"{path}.action")
        at_s = _as_num(_require(entry, "at_s", path), f"{path}.at_s")
        if action == faults.ACTION_SET_LINK:
            _check_keys(entry, {"action", "at_s", "src", "dst", "delay_ms", "jitter", "loss"}, path)
            events.append(
                faults.SetLinkEvent(
                    at_s=at_s,
                    src=_as_str(_require(entry, "src", path), f"{path}.src"),
                    dst=_as_str(_require(entry, "dst", path), f"{path}.dst"),
                    delay_ms=_as_num(entry.get("delay_ms", 0.0), f"{path}.delay_ms"),
                    jitter=_parse_jitter_block(entry.get("jitter", {}), f"{path}.jitter"),
                    loss=_parse_loss_block(entry.get("loss", {}), f"{path}.loss"),
                )
            )
        elif action == faults.ACTION_BLACKOUT:
            _check_keys(entry, {"action", "at_s", "cluster", "end_s"}, path)
            events.append(
                faults.BlackoutEvent(
                    at_s=at_s,
                    cluster=_as_str(_require(entry, "cluster", path), f"{path}.cluster"),
                    end_s=_as_num(_require(entry, "end_s", path), f"{path}.end_s"),
                )
            )
        elif action == faults.ACTION_SET_HEALTH:
            _check_keys(entry, {"action", "at_s", "service", "cluster", "replica", "healthy"}, path)
            replica = entry.get("replica")
            events.append(
                faults.SetHealthEvent(
                    at_s=at_s,
                    service=_as_str(_require(entry, "service", path), f"{path}.service"),
                    cluster=_as_str(_require(entry, "cluster", path), f"{path}.cluster"),
                    healthy=_as_bool(_require(entry, "healthy", path), f"{path}.healthy"),
                    replica=None if replica is None else _as_int(replica, f"{path}.replica"),
                )
            )
        else:
            _fail(f"{path}.action: unknown action '{action}'")
    return tuple(events)


def load_scenario(path: str | Path) -> FederationSpec:
    """Read and parse a scenario file. I/O errors propagate to the caller."""
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def render_scenario(spec: FederationSpec) -> str:
    """Render a spec back to canonical YAML (defaults made explicit, sparse
    matrix entries sorted row-major, replica maps in cluster order)."""
    names = [cluster.name for cluster in spec.clusters]
    order = {name: k for k, name in enumerate(names)}

    doc: dict = {
        "clusters": [
            {
                "name": c.name,
                "nodes": c.nodes,
                "vcpus_per_node": c.vcpus_per_node,
                "memory_gb": c.memory_gb,
                "role": c.role,
            }
            for c in spec.clusters
        ]
    }

    links: dict = {
        "base_delay_ms": spec.links.base_delay_ms,
        "intra_base_delay_ms": spec.links.intra_base_delay_ms,
        "one_way_delay_ms": [list(row) for row in spec.links.one_way_delay_ms],
    }
    jitter_entries = [
        {"src": names[i], "dst": names[j], "dist": cell.dist, "scale_ms": cell.scale_ms}
        for i, row in enumerate(spec.links.jitter)
        for j, cell in enumerate(row)
        if cell != JitterSpec()
    ]
    if jitter_entries:
        links["jitter"] = jitter_entries
    loss_entries = [
        {"src": names[i], "dst": names[j], "p": cell.p, "correlation": cell.correlation}
        for i, row in enumerate(spec.links.loss)
        for j, cell in enumerate(row)
        if cell != LossSpec()
    ]
    if loss_entries:
        links["loss"] = loss_entries
    doc["links"] = links

    doc["services"] = []
    for service in spec.services:
        placement_order = sorted(service.replicas_per_cluster, key=lambda n: (order.get(n, len(order)), n))
        entry = {
            "name": service.name,
            "stage": service.stage,
            "replicas_per_cluster": {name: service.replicas_per_cluster[name] for name in placement_order},
            "demand": {
                "base_ms": service.demand.base_ms,
                "per_kb_ms": service.demand.per_kb_ms,
                "reduction": service.demand.reduction,
            },
        }
        if service.backend_policy is not None:
            entry["backend_policy"] = service.backend_policy
        doc["services"].append(entry)

    payload = spec.workload.payload
    payload_doc: dict = {"dist": payload.dist}
    if payload.dist == PAYLOAD_CONSTANT:
        payload_doc["bytes"] = payload.bytes
    elif payload.dist == PAYLOAD_LOGNORMAL:
        payload_doc["mu"] = payload.mu
        payload_doc["sigma"] = payload.sigma
    elif payload.dist == PAYLOAD_EMPIRICAL:
        payload_doc["values"] = list(payload.values)
        payload_doc["mode"] = payload.mode
    doc["workload"] = {
        "arrival": spec.workload.arrival,
        "payload": payload_doc,
        "phases": [{"rate": phase.rate, "duration_s": phase.duration_s} for phase in spec.workload.phases],
    }

    timeline_doc = []
    for event in spec.timeline:
        if isinstance(event, faults.SetLinkEvent):
            timeline_doc.append(
                {
                    "action": faults.ACTION_SET_LINK,
                    "at_s": event.at_s,
                    "src": event.src,
                    "dst": event.dst,
                    "delay_ms": event.delay_ms,
                    "jitter": {"dist": event.jitter.dist, "scale_ms": event.jitter.scale_ms},
                    "loss": {"p": event.loss.p, "correlation": event.loss.correlation},
                }
            )
        elif isinstance(event, faults.BlackoutEvent):
            timeline_doc.append(
                {
                    "action": faults.ACTION_BLACKOUT,
                    "at_s": event.at_s,
                    "cluster": event.cluster,
                    "end_s": event.end_s,
                }
            )
        else:
            entry = {
                "action": faults.ACTION_SET_HEALTH,
                "at_s": event.at_s,
                "service": event.service,
                "cluster": event.cluster,
                "healthy": event.healthy,
            }
            if event.replica is not None:
                entry["replica"] = event.replica
            timeline_doc.append(entry)
    if timeline_doc:
        doc["timeline"] = timeline_doc

    doc["seed"] = spec.seed
    doc["duration_s"] = spec.duration_s
    doc["scrape_interval_s"] = spec.scrape_interval_s
    doc["timeout_s"] = spec.timeout_s
    doc["rate_window_s"] = spec.rate_window_s
    return yaml.safe_dump(doc, sort_keys=False)


def validate(spec: FederationSpec) -> ValidatedTopology:
    """Semantic validation. Collects every violation; raises ValidationError
    listing all of them, otherwise returns the resolved topology."""
    errors: list[str] = []
    n = len(spec.clusters)

    seen_names: set[str] = set()
    for k, cluster in enumerate(spec.clusters):
        path = f"clusters[{k}]"
        if not cluster.name:
            errors.append(f"{path}.name: empty")
        elif cluster.name in seen_names:
            errors.append(f"{path}.name: duplicate '{cluster.name}'")
        seen_names.add(cluster.name)
        if cluster.nodes < 1:
            errors.append(f"{path}.nodes < 1")
        if cluster.vcpus_per_node < 1:
            errors.append(f"{path}.vcpus_per_node < 1")
        if cluster.memory_gb <= 0:
            errors.append(f"{path}.memory_gb <= 0")
        if cluster.role not in ROLES:
            errors.append(f"{path}.role: unknown role '{cluster.role}'")
    index_of = {cluster.name: k for k, cluster in enumerate(spec.clusters)}

    _validate_links(spec.links, n, errors)
    frontend_spec, backend_spec, backend_policy = _validate_services(spec, index_of, errors)
    _validate_workload(spec.workload, errors)

    generates_traffic = any(phase.rate > 0 for phase in spec.workload.phases)
    if generates_traffic and (frontend_spec is None or backend_spec is None):
        errors.append("workload requires one frontend and one backend service")

    if spec.duration_s <= 0:
        errors.append("duration_s <= 0")
    if not 0 <= spec.seed < 2**64:
        errors.append("seed out of [0, 2^64)")
    if spec.scrape_interval_s <= 0:
        errors.append("scrape_interval_s <= 0")
    if spec.timeout_s <= 0:
        errors.append("timeout_s <= 0")
    if spec.rate_window_s <= 0:
        errors.append("rate_window_s <= 0")

    placement_map = {
        service.name: {
            index_of[name]: count
            for name, count in service.replicas_per_cluster.items()
            if name in index_of
        }
        for service in spec.services
    }
    errors.extend(faults.check_timeline(spec.timeline, index_of, placement_map))

    if errors:
        raise ValidationError(errors)

    services = []
    frontend = backend = None
    for service in spec.services:
        profile = StageProfile(
            stage=service.stage,
            base_demand_s=service.demand.base_ms * 1e-3,
            per_byte_demand_s=service.demand.per_kb_ms * 1e-6,
            reduction_factor=service.demand.reduction,
        )
        placements = tuple(
            (index_of[name], count)
            for name, count in sorted(service.replicas_per_cluster.items(), key=lambda kv: index_of[kv[0]])
            if count > 0
        )
        resolved = ResolvedService(service.name, service.stage, placements, profile)
        services.append(resolved)
        if service.stage == STAGE_FRONTEND:
            frontend = resolved
        else:
            backend = resolved

    return ValidatedTopology(
        spec=spec,
        clusters=spec.clusters,
        index_of=index_of,
        links=spec.links,
        services=tuple(services),
        frontend=frontend,
        backend=backend,
        backend_policy=backend_policy,
        workload=spec.workload,
        timeline=spec.timeline,
        seed=spec.seed,
        duration_s=spec.duration_s,
        scrape_interval_s=spec.scrape_interval_s,
        timeout_s=spec.timeout_s,
        rate_window_s=spec.rate_window_s,
    )


def _validate_links(links: LinksSpec, n: int, errors: list[str]) -> None:
    for matrix_name, matrix in (
        ("one_way_delay", links.one_way_delay_ms),
        ("jitter", links.jitter),
        ("loss", links.loss),
    ):
        if len(matrix) != n or any(len(row) != n for row in matrix):
            errors.append(f"links.{matrix_name}: expected {n}x{n} matrix")
            return
    for i in range(n):
        for j in range(n):
            delay = links.one_way_delay_ms[i][j]
            jit = links.jitter[i][j]
            loss = links.loss[i][j]
            if i == j:
                if delay != 0:
                    errors.append(f"one_way_delay[{i}][{i}] != 0")
                if jit.dist != JITTER_NONE:
                    errors.append(f"jitter[{i}][{i}] must be none")
                if loss.p != 0:
                    errors.append(f"loss[{i}][{i}].p != 0")
                continue
            if delay < 0:
                errors.append(f"one_way_delay[{i}][{j}] < 0")
            if jit.dist not in JITTER_DISTS:
                errors.append(f"jitter[{i}][{j}].dist: unknown dist '{jit.dist}'")
            if jit.scale_ms < 0:
                errors.append(f"jitter[{i}][{j}].scale_ms < 0")
            if not 0.0 <= loss.p <= 1.0:
                errors.append(f"loss[{i}][{j}].p out of [0, 1]")
            if not 0.0 <= loss.correlation <= 1.0:
                errors.append(f"loss[{i}][{j}].correlation out of [0, 1]")
    if links.base_delay_ms < 0:
        errors.append("links.base_delay_ms < 0")
    if links.intra_base_delay_ms < 0:
        errors.append("links.intra_base_delay_ms < 0")


def _validate_services(spec: FederationSpec, index_of: dict[str, int], errors: list[str]):
    seen: set[str] = set()
    frontend = backend = None
    policies_seen: set[str] = set()
    for k, service in enumerate(spec.services):
        path = f"services[{k}]"
        if not service.name:
            errors.append(f"{path}.name: empty")
        elif service.name in seen:
            errors.append(f"{path}.name: duplicate '{service.name}'")
        seen.add(service.name)
        if service.stage not in STAGES:
            errors.append(f"{path}.stage: unknown stage '{service.stage}'")
        elif service.stage == STAGE_FRONTEND:
            if frontend is not None:
                errors.append("services: more than one frontend service")
            frontend = service
        else:
            if backend is not None:
                errors.append("services: more than one backend service")
            backend = service

        total = 0
        for name, count in service.replicas_per_cluster.items():
            if name not in index_of:
                errors.append(f"{path}.replicas_per_cluster: unknown cluster '{name}'")
            if count < 0:
                errors.append(f"{path}.replicas_per_cluster['{name}'] < 0")
            else:
                total += count
        if total < 1:
            errors.append(f"{path}: at least one replica required")

        if service.demand.base_ms < 0:
            errors.append(f"{path}.demand.base_ms < 0")
        if service.demand.per_kb_ms < 0:
            errors.append(f"{path}.demand.per_kb_ms < 0")
        if not 0.0 < service.demand.reduction <= 1.0:
            errors.append(f"{path}.demand.reduction out of (0, 1]")
        if service.backend_policy is not None:
            if service.backend_policy not in POLICIES:
                errors.append(f"{path}.backend_policy: unknown policy '{service.backend_policy}'")
            else:
                policies_seen.add(service.backend_policy)
    if len(policies_seen) > 1:
        errors.append("services: conflicting backend_policy values")
    policy = next(iter(policies_seen)) if policies_seen else ROUND_ROBIN
    return frontend, backend, policy


def _validate_workload(workload_spec: WorkloadSpec, errors: list[str]) -> None:
    if workload_spec.arrival not in ARRIVAL_KINDS:
        errors.append(f"workload.arrival: unknown kind '{workload_spec.arrival}'")
    for k, phase in enumerate(workload_spec.phases):
        if phase.rate < 0:
            errors.append(f"workload.phases[{k}].rate < 0")
        if phase.duration_s <= 0:
            errors.append(f"workload.phases[{k}].duration_s <= 0")
    payload = workload_spec.payload
    if payload.dist not in PAYLOAD_DISTS:
        errors.append(f"workload.payload.dist: unknown dist '{payload.dist}'")
    elif payload.dist == PAYLOAD_CONSTANT:
        if payload.bytes < 1:
            errors.append("workload.payload.bytes < 1")
    elif payload.dist == PAYLOAD_LOGNORMAL:
        if payload.sigma < 0:
            errors.append("workload.payload.sigma < 0")
    elif payload.dist == PAYLOAD_EMPIRICAL:
        if not payload.values:
            errors.append("workload.payload.values: empty")
        elif any(v < 1 for v in payload.values):
            errors.append("workload.payload.values: sizes must be >= 1")
        if payload.mode not in EMPIRICAL_MODES:
            errors.append(f"workload.payload.mode: unknown mode '{payload.mode}'")


def build_runtime(topology: ValidatedTopology):
    """Construct the engine for a validated topology. The event queue starts
    empty; the first ``run`` primes timeline, scrape, and arrival events."""
    from .engine import EngineState

    return EngineState(topology)
