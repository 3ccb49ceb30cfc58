"""Fault timelines: scheduled impairment changes, blackouts, health flips.

A timeline is a list of events pinned to virtual times. Compilation turns it
into an ordered list of primitive actions the engine replays as
``timeline_apply`` events: a ``set_link`` becomes one rule update, a blackout
becomes a start action at ``at_s`` (install 100% data loss on every directed
link touching the cluster, remembering what was there) and an end action at
``end_s`` (restore what was remembered). Control-class traffic is never
touched by a blackout.

Blackouts on the same cluster must not overlap; the restore would otherwise
resurrect rules from the wrong epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netem import DATA, ImpairmentRule, JitterSpec, LossSpec

ACTION_SET_LINK = "set_link"
ACTION_BLACKOUT = "blackout"
ACTION_SET_HEALTH = "set_health"


@dataclass(frozen=True)
class SetLinkEvent:
    """Replace the data-class rule on one directed link at ``at_s``."""

    at_s: float
    src: str
    dst: str
    delay_ms: float = 0.0
    jitter: JitterSpec = JitterSpec()
    loss: LossSpec = LossSpec()


@dataclass(frozen=True)
class BlackoutEvent:
    """Total connectivity loss for one cluster over [at_s, end_s)."""

    at_s: float
    cluster: str
    end_s: float


@dataclass(frozen=True)
class SetHealthEvent:
    """Flip health of one replica, or of every replica of the service in the
    cluster when ``replica`` is None."""

    at_s: float
    service: str
    cluster: str
    healthy: bool
    replica: int | None = None


TimelineEvent = SetLinkEvent | BlackoutEvent | SetHealthEvent


# Compiled primitive actions, cluster names resolved to indices.

@dataclass(frozen=True)
class ApplyRule:
    rule: ImpairmentRule


@dataclass(frozen=True)
class BlackoutStart:
    cluster: int


@dataclass(frozen=True)
class BlackoutEnd:
    cluster: int


@dataclass(frozen=True)
class ApplyHealth:
    service: str
    cluster: int
    replica: int | None
    healthy: bool


def check_timeline(events, index_of: dict[str, int], services: dict[str, dict[int, int]]) -> list[str]:
    """Validate a timeline against the topology; returns error strings.

    ``services`` maps service name -> {cluster index -> replica count}.
    """
    errors = []
    blackout_spans: dict[str, list[tuple[float, float, int]]] = {}
    for k, event in enumerate(events):
        path = f"timeline[{k}]"
        if event.at_s < 0:
            errors.append(f"{path}.at_s < 0")
        if isinstance(event, SetLinkEvent):
            for field_name, name in (("src", event.src), ("dst", event.dst)):
                if name not in index_of:
                    errors.append(f"{path}.{field_name}: unknown cluster '{name}'")
            if event.src == event.dst and event.src in index_of:
                errors.append(f"{path}: src and dst must differ")
            if event.delay_ms < 0:
                errors.append(f"{path}.delay_ms < 0")
            if event.jitter.dist not in ("none", "uniform", "normal"):
                errors.append(f"{path}.jitter.dist: unknown dist '{event.jitter.dist}'")
            if event.jitter.scale_ms < 0:
                errors.append(f"{path}.jitter.scale_ms < 0")
            if not 0.0 <= event.loss.p <= 1.0:
                errors.append(f"{path}.loss.p out of [0, 1]")
            if not 0.0 <= event.loss.correlation <= 1.0:
                errors.append(f"{path}.loss.correlation out of [0, 1]")
        elif isinstance(event, BlackoutEvent):
            if event.cluster not in index_of:
                errors.append(f"{path}.cluster: unknown cluster '{event.cluster}'")
            if event.end_s <= event.at_s:
                errors.append(f"{path}: end_s must exceed at_s")
            else:
                blackout_spans.setdefault(event.cluster, []).append((event.at_s, event.end_s, k))
        elif isinstance(event, SetHealthEvent):
            if event.cluster not in index_of:
                errors.append(f"{path}.cluster: unknown cluster '{event.cluster}'")
            elif event.service not in services:
                errors.append(f"{path}.service: unknown service '{event.service}'")
            else:
                count = services[event.service].get(index_of[event.cluster], 0)
                if count == 0:
                    errors.append(
                        f"{path}: service '{event.service}' has no replicas in cluster '{event.cluster}'"
                    )
                elif event.replica is not None and not 0 <= event.replica < count:
                    errors.append(f"{path}.replica: out of range for '{event.service}'")
        else:
            errors.append(f"{path}: unknown event type {type(event).__name__}")
    for cluster, spans in blackout_spans.items():
        spans.sort()
        for (s1, e1, _i1), (s2, _e2, i2) in zip(spans, spans[1:]):
            if s2 < e1:
                errors.append(f"timeline[{i2}]: blackout on '{cluster}' overlaps an earlier blackout")
    return errors


def compile_timeline(events, index_of: dict[str, int]) -> list[tuple[float, object]]:
    """Expand a validated timeline into (time, action) pairs, ordered by time
    with declaration order breaking ties."""
    entries: list[tuple[float, int, object]] = []
    for k, event in enumerate(events):
        if isinstance(event, SetLinkEvent):
            rule = ImpairmentRule(
                src=index_of[event.src],
                dst=index_of[event.dst],
                delay_ms=event.delay_ms,
                jitter=event.jitter,
                loss=event.loss,
                traffic_class=DATA,
            )
            entries.append((event.at_s, k, ApplyRule(rule)))
        elif isinstance(event, BlackoutEvent):
            cluster = index_of[event.cluster]
            entries.append((event.at_s, k, BlackoutStart(cluster)))
            entries.append((event.end_s, k, BlackoutEnd(cluster)))
        elif isinstance(event, SetHealthEvent):
            entries.append(
                (
                    event.at_s,
                    k,
                    ApplyHealth(event.service, index_of[event.cluster], event.replica, event.healthy),
                )
            )
    entries.sort(key=lambda entry: (entry[0], entry[1]))
    return [(time, action) for time, _k, action in entries]


def apply(engine, action) -> None:
    """Apply one compiled action to a running engine. Applying the same
    ``ApplyRule`` or ``ApplyHealth`` twice is a no-op the second time."""
    if isinstance(action, ApplyRule):
        engine.table = engine.table.with_rule(action.rule)
    elif isinstance(action, BlackoutStart):
        _blackout_start(engine, action.cluster)
    elif isinstance(action, BlackoutEnd):
        _blackout_end(engine, action.cluster)
    elif isinstance(action, ApplyHealth):
        engine.registry.set_health(action.service, action.cluster, action.replica, action.healthy)
    else:
        raise TypeError(f"unknown timeline action {type(action).__name__}")


def _blackout_start(engine, cluster: int) -> None:
    n = len(engine.topology.clusters)
    saved: dict[tuple[int, int, str], ImpairmentRule | None] = {}
    table = engine.table
    for other in range(n):
        if other == cluster:
            continue
        for src, dst in ((cluster, other), (other, cluster)):
            key = (src, dst, DATA)
            saved[key] = table.rules.get(key)
            current = table.classify(src, dst, DATA)
            table = table.with_rule(
                ImpairmentRule(
                    src=src,
                    dst=dst,
                    delay_ms=current.delay_ms,
                    jitter=current.jitter,
                    loss=LossSpec(p=1.0, correlation=0.0),
                    traffic_class=DATA,
                )
            )
    engine.blackout_saved[cluster] = saved
    engine.table = table


def _blackout_end(engine, cluster: int) -> None:
    saved = engine.blackout_saved.pop(cluster, {})
    table = engine.table
    for key, rule in saved.items():
        table = table.with_rule(rule) if rule is not None else table.without(key)
    engine.table = table
