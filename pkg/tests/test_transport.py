from __future__ import annotations

import pytest

from cdnemu.errors import TransportError
from cdnemu.http import split_url


def test_split_url():
    assert split_url("http://h:80/a/b?x=1") == ("h:80", "/a/b?x=1")
    assert split_url("http://h") == ("h", "/")


def test_request_charges_link_time(rig):
    start = rig.clock.now_ms
    resp = rig.clock.run_process(rig.transport.request("client", "http://server-3/manifest/v1"))
    assert resp.status == 200
    assert rig.clock.now_ms - start == pytest.approx(60.0)


def test_down_host_times_out(rig):
    rig.transport.mark_down("server-2")
    with pytest.raises(TransportError):
        rig.clock.run_process(rig.transport.request("client", "http://server-2/echo"))
    assert rig.clock.now_ms == pytest.approx(2000)
    assert rig.transport.call("gateway", "http://server-2/metrics") is None
    rig.transport.mark_up("server-2")
    assert rig.transport.call("gateway", "http://server-2/metrics").status == 200


def test_echo_rtt_is_round_trip(rig):
    assert rig.transport.echo_rtt("gateway", "server-2") == pytest.approx(40.0)
    rig.network.apply_delay("gateway--server-2", 300)
    assert rig.transport.echo_rtt("gateway", "server-2") == pytest.approx(600.0)
    assert rig.transport.probe_wait_s([600.0, None]) == 2.0
