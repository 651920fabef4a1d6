from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from cdnemu.errors import EmptyCandidatesError, EmptyFilenameError, UnknownServerError
from cdnemu.gateway import ProbeResult, decision_row, select_server
from cdnemu.transport import drain


def probes(*rtts):
    return [ProbeResult(f"server-{i + 1}", r, "t") for i, r in enumerate(rtts)]


def test_lowest_rtt_wins():
    d = select_server(probes(40, 20, 60), random.Random(0))
    assert (d.chosen, d.min_rtt_ms, d.fallback_used) == ("server-2", 20, False)


def test_tie_goes_to_first():
    assert select_server(probes(30, 20, 20), random.Random(0)).chosen == "server-2"


def test_absent_skipped():
    assert select_server(probes(None, 50, None), random.Random(0)).chosen == "server-2"


def test_all_absent_falls_back():
    d = select_server(probes(None, None), random.Random(0))
    assert d.fallback_used and d.min_rtt_ms is None
    assert d.chosen in ("server-1", "server-2")


def test_fallback_uses_all_candidates():
    rng = random.Random(4)
    chosen = {select_server(probes(None, None, None), rng).chosen for _ in range(200)}
    assert chosen == {"server-1", "server-2", "server-3"}


def test_empty_candidates():
    with pytest.raises(EmptyCandidatesError):
        select_server([], random.Random(0))


@settings(max_examples=200)
@given(st.lists(st.one_of(st.none(), st.floats(0, 1000, allow_nan=False)), min_size=1,
                max_size=16))
def test_choice_is_a_minimum(rtts):
    d = select_server(probes(*rtts), random.Random(0))
    present = [r for r in rtts if r is not None]
    if present:
        assert d.min_rtt_ms == min(present)
        assert d.chosen == f"server-{rtts.index(min(present)) + 1}"
    else:
        assert d.fallback_used


def test_decision_row():
    d = select_server(probes(20.0, None), random.Random(0))
    assert decision_row("ts", "a.mp4", d) == [
        "ts", "a.mp4", "server-1", "20.0", "false", "server-1=20.0;server-2=N/A"]


def test_ping_rtt_adds_coordination(rig):
    rig.gateway.coordination_ms = 5
    assert rig.gateway.ping_rtt("server-2").rtt_ms == pytest.approx(45.0)
    with pytest.raises(UnknownServerError):
        rig.gateway.ping_rtt("server-9")


def test_handle_request_redirects_to_fastest(rig):
    resp = rig.gateway.handle_request("v1_seg_0001.mp4")
    assert resp.status == 302
    assert resp.location == "http://server-1/segment/v1_seg_0001.mp4"
    rig.transport.mark_down("server-1")
    assert rig.gateway.handle_request("x.mp4").location == "http://server-2/segment/x.mp4"
    with pytest.raises(EmptyFilenameError):
        rig.gateway.handle_request("")


def test_http_surface(rig):
    assert drain(rig.gateway.handle("/cdn/")).status == 400
    assert drain(rig.gateway.handle("/cdn/a.mp4")).status == 302
    assert drain(rig.gateway.handle("/segment/a.mp4")).status == 302
    assert drain(rig.gateway.handle("/elsewhere")).status == 404
    m = drain(rig.gateway.handle("/manifest/v1"))
    assert m.status == 200 and b"<MPD" in m.body


def test_probe_round_waits_for_slowest(rig):
    rig.transport.mark_down("server-3")
    before = rig.clock.now_ms
    rig.clock.run_process(rig.gateway.handle("/cdn/a.mp4"))
    assert rig.clock.now_ms - before == pytest.approx(rig.transport.timeout_s * 1000)


def test_no_servers_503(rig):
    rig.gateway.servers = []
    assert drain(rig.gateway.handle("/cdn/a.mp4")).status == 503


def test_decision_log_callback(rig):
    seen = []
    rig.gateway.on_decision = lambda ts, name, d: seen.append((name, d.chosen))
    rig.gateway.handle_request("a.mp4")
    assert seen == [("a.mp4", "server-1")]


def test_probe_cache(rig):
    rig.gateway.cache_ttl_s = 10
    first = rig.gateway.probe_all()
    rig.network.apply_delay("gateway--server-3", 0)
    assert rig.gateway.probe_all() is first
    rig.clock.advance(11)
    assert rig.gateway.probe_all()[2].rtt_ms == 0
    assert not math.isnan(first[0].rtt_ms)
