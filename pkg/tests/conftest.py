from __future__ import annotations

import random

import pytest

from cdnemu.clock import VirtualClock
from cdnemu.gateway import Gateway
from cdnemu.netsim import Network
from cdnemu.origin import OriginServer
from cdnemu.topology import ExperimentConfig, build_topology
from cdnemu.transport import VirtualTransport


class Rig:
    """Small in-process deployment: gateway, origins and a virtual transport."""

    def __init__(self, base_rtts=(20.0, 40.0, 60.0), segments=10, seg_bytes=64 * 1024,
                 coordination_ms=0.0):
        n = len(base_rtts)
        self.cfg = ExperimentConfig(server_count=n, base_rtt_ms=tuple(base_rtts))
        self.clock = VirtualClock()
        self.topo = build_topology(self.cfg)
        self.network = Network(self.clock)
        for s, base in zip(self.topo.servers, base_rtts):
            self.network.add_link(self.topo.link_between("gateway", s), base / 2)
            self.network.add_link(self.topo.link_between("client", s), base / 2)
        self.transport = VirtualTransport(self.clock, self.network, self.topo)
        self.origins = {}
        for s in self.topo.servers:
            o = OriginServer(s, self.clock)
            o.provision("v1", segments, seg_bytes)
            self.origins[s] = o
            self.transport.register(s, o)
        self.gateway = Gateway(self.topo.servers, self.transport, rng=random.Random(1),
                               coordination_ms=coordination_ms)
        self.transport.register("gateway", self.gateway)


@pytest.fixture
def rig():
    return Rig()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
