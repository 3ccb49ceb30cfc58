"""Timeline validation, compilation, and live application."""

import pytest

from fedsim import faults, topology
from fedsim.faults import (
    ApplyHealth,
    ApplyRule,
    BlackoutEnd,
    BlackoutEvent,
    BlackoutStart,
    SetHealthEvent,
    SetLinkEvent,
    check_timeline,
    compile_timeline,
)
from fedsim.netem import DATA, ImpairmentRule, JitterSpec, LossSpec
from tests.conftest import make_topology, run_scenario_text, two_cluster_doc

INDEX = {"west": 0, "east": 1}
PLACEMENTS = {"fe": {0: 1}, "be": {1: 2}}


class TestCheckTimeline:
    def test_clean_timeline_passes(self):
        events = (
            SetLinkEvent(at_s=5.0, src="west", dst="east", delay_ms=10.0),
            BlackoutEvent(at_s=10.0, cluster="east", end_s=20.0),
            SetHealthEvent(at_s=10.0, service="be", cluster="east", healthy=False),
        )
        assert check_timeline(events, INDEX, PLACEMENTS) == []

    def test_unknown_cluster_and_service(self):
        events = (
            SetLinkEvent(at_s=0.0, src="west", dst="mars"),
            BlackoutEvent(at_s=0.0, cluster="mars", end_s=5.0),
            SetHealthEvent(at_s=0.0, service="nope", cluster="west", healthy=False),
        )
        errors = check_timeline(events, INDEX, PLACEMENTS)
        assert "timeline[0].dst: unknown cluster 'mars'" in errors
        assert "timeline[1].cluster: unknown cluster 'mars'" in errors
        assert "timeline[2].service: unknown service 'nope'" in errors

    def test_set_health_needs_replicas_in_cluster(self):
        events = (
            SetHealthEvent(at_s=0.0, service="fe", cluster="east", healthy=False),
            SetHealthEvent(at_s=0.0, service="be", cluster="east", healthy=False, replica=2),
        )
        errors = check_timeline(events, INDEX, PLACEMENTS)
        assert "timeline[0]: service 'fe' has no replicas in cluster 'east'" in errors
        assert "timeline[1].replica: out of range for 'be'" in errors

    def test_degenerate_and_negative_windows(self):
        events = (
            BlackoutEvent(at_s=5.0, cluster="west", end_s=5.0),
            SetLinkEvent(at_s=-1.0, src="west", dst="east"),
            SetLinkEvent(at_s=0.0, src="west", dst="west"),
        )
        errors = check_timeline(events, INDEX, PLACEMENTS)
        assert "timeline[0]: end_s must exceed at_s" in errors
        assert "timeline[1].at_s < 0" in errors
        assert "timeline[2]: src and dst must differ" in errors

    def test_overlapping_blackouts_rejected(self):
        events = (
            BlackoutEvent(at_s=0.0, cluster="east", end_s=10.0),
            BlackoutEvent(at_s=5.0, cluster="east", end_s=15.0),
        )
        errors = check_timeline(events, INDEX, PLACEMENTS)
        assert errors == ["timeline[1]: blackout on 'east' overlaps an earlier blackout"]

    def test_adjacent_blackouts_allowed(self):
        events = (
            BlackoutEvent(at_s=0.0, cluster="east", end_s=10.0),
            BlackoutEvent(at_s=10.0, cluster="east", end_s=20.0),
            BlackoutEvent(at_s=5.0, cluster="west", end_s=15.0),
        )
        assert check_timeline(events, INDEX, PLACEMENTS) == []

    def test_bad_impairment_parameters(self):
        events = (
            SetLinkEvent(at_s=0.0, src="west", dst="east", delay_ms=-2.0),
            SetLinkEvent(at_s=0.0, src="west", dst="east", loss=LossSpec(p=1.5)),
            SetLinkEvent(at_s=0.0, src="west", dst="east", jitter=JitterSpec(dist="cauchy")),
        )
        errors = check_timeline(events, INDEX, PLACEMENTS)
        assert "timeline[0].delay_ms < 0" in errors
        assert "timeline[1].loss.p out of [0, 1]" in errors
        assert "timeline[2].jitter.dist: unknown dist 'cauchy'" in errors


class TestCompile:
    def test_blackout_expands_to_start_and_end(self):
        events = (
            SetHealthEvent(at_s=300.0, service="be", cluster="east", healthy=False),
            BlackoutEvent(at_s=300.0, cluster="east", end_s=600.0),
            SetLinkEvent(at_s=100.0, src="west", dst="east", delay_ms=9.0),
        )
        compiled = compile_timeline(events, INDEX)
        times = [t for t, _ in compiled]
        actions = [a for _, a in compiled]
        assert times == [100.0, 300.0, 300.0, 600.0]
        assert isinstance(actions[0], ApplyRule)
        assert actions[0].rule.delay_ms == 9.0
        assert actions[0].rule.traffic_class == DATA
        # same-time tie: the health flip was declared first, so it runs first
        assert actions[1] == ApplyHealth("be", 1, None, False)
        assert actions[2] == BlackoutStart(1)
        assert actions[3] == BlackoutEnd(1)

    def test_empty_timeline(self):
        assert compile_timeline((), INDEX) == []


class TestApply:
    def fresh_engine(self, extra=""):
        links = "  one_way_delay_ms: [[0.0, 25.0], [25.0, 0.0]]"
        return topology.build_runtime(make_topology(two_cluster_doc(links=links, extra=extra)))

    def test_apply_rule_replaces_link(self):
        engine = self.fresh_engine()
        rule = ImpairmentRule(src=0, dst=1, delay_ms=70.0, traffic_class=DATA)
        faults.apply(engine, ApplyRule(rule))
        assert engine.table.classify(0, 1, DATA).delay_ms == 70.0
        # the reverse direction is untouched
        assert engine.table.classify(1, 0, DATA).delay_ms == 25.0

    def test_blackout_preserves_delay_and_restores_exact_rules(self):
        engine = self.fresh_engine()
        before = engine.table.classify(0, 1, DATA)
        faults.apply(engine, BlackoutStart(1))
        during = engine.table.classify(0, 1, DATA)
        assert during.loss.p == 1.0
        assert during.delay_ms == 25.0  # delay survives, only loss is forced
        assert engine.table.classify(1, 0, DATA).loss.p == 1.0
        faults.apply(engine, BlackoutEnd(1))
        # restore brings back the identical rule object, not a reconstruction
        assert engine.table.classify(0, 1, DATA) is before
        assert engine.table.classify(0, 1, DATA).loss.p == 0.0

    def test_blackout_restores_absent_rules_to_default(self):
        engine = topology.build_runtime(make_topology(two_cluster_doc()))
        key = (0, 1, DATA)
        assert key not in engine.table.rules
        faults.apply(engine, BlackoutStart(1))
        assert key in engine.table.rules
        faults.apply(engine, BlackoutEnd(1))
        assert key not in engine.table.rules

    def test_blackout_end_without_start_is_noop(self):
        engine = self.fresh_engine()
        rules_before = dict(engine.table.rules)
        faults.apply(engine, BlackoutEnd(1))
        assert dict(engine.table.rules) == rules_before

    def test_apply_health_whole_cluster(self):
        engine = self.fresh_engine()
        faults.apply(engine, ApplyHealth("be", 1, None, False))
        assert all(not e.healthy for e in engine.registry.list("be"))
        faults.apply(engine, ApplyHealth("be", 1, 0, True))
        healthy = {e.replica for e in engine.registry.list("be") if e.healthy}
        assert healthy == {0}

    def test_unknown_action_type_raises(self):
        engine = self.fresh_engine()
        with pytest.raises(TypeError):
            faults.apply(engine, "reboot")


class TestEndToEnd:
    def test_set_link_changes_live_latency(self):
        # delay jumps from 0 to 200 ms at t=10: later requests are slower
        extra = (
            "timeline:\n"
            "  - {action: set_link, at_s: 10.0, src: west, dst: east, delay_ms: 200.0}\n"
        )
        result, _ = run_scenario_text(two_cluster_doc(extra=extra))
        early = [t for t in result.traces if t.ingress_in < 9.0 and t.outcome == "completed"]
        late = [t for t in result.traces if t.ingress_in >= 10.0 and t.outcome == "completed"]
        assert early and late
        early_latency = max(t.response_out - t.ingress_in for t in early)
        late_latency = min(t.response_out - t.ingress_in for t in late)
        assert late_latency > early_latency + 0.15

    def test_blackout_loses_cross_cluster_requests(self):
        extra = (
            "timeline:\n"
            "  - {action: blackout, at_s: 5.0, cluster: east, end_s: 15.0}\n"
        )
        result, _ = run_scenario_text(two_cluster_doc(extra=extra))
        in_window = [t for t in result.traces if 5.0 <= t.ingress_in < 14.5]
        after = [t for t in result.traces if t.ingress_in >= 15.0]
        assert in_window and all(t.outcome == "lost" for t in in_window)
        assert after and all(t.outcome == "completed" for t in after)
