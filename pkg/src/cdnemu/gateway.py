"""Gateway node: probe every server, pick the lowest RTT, redirect the client.

HTTP surface::

    GET /cdn/<filename>        302 to <chosen server>/segment/<filename>
    GET /segment/<filename>    same as /cdn/, so origin-style URLs also work
    GET /manifest/<video_id>   manifest fetched from the chosen server
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import (EmptyCandidatesError, EmptyFilenameError, NoServersError,
                     TransportError, UnknownServerError)
from .http import Response, strip_query

logger = logging.getLogger(__name__)

DECISION_LOG_HEADER = ["timestamp", "filename", "chosen", "min_rtt_ms", "fallback", "probe_values"]


@dataclass(frozen=True)
class ProbeResult:
    server: str
    rtt_ms: float | None  # None: probe failed or timed out
    probed_at: str


@dataclass(frozen=True)
class SelectionDecision:
    chosen: str
    min_rtt_ms: float | None
    fallback_used: bool
    candidates: tuple[ProbeResult, ...]


def select_server(candidates: Sequence[ProbeResult], rng: random.Random) -> SelectionDecision:
    """Lowest RTT wins; earlier candidates win ties; all-absent picks at random."""
    if not candidates:
        raise EmptyCandidatesError("no candidates to select from")
    chosen = None
    min_rtt = math.inf
    for c in candidates:
        if c.rtt_ms is not None and c.rtt_ms < min_rtt:
            min_rtt = c.rtt_ms
            chosen = c.server
    if chosen is None:
        pick = candidates[rng.randrange(len(candidates))]
        return SelectionDecision(pick.server, None, True, tuple(candidates))
    return SelectionDecision(chosen, min_rtt, False, tuple(candidates))


def decision_row(timestamp: str, filename: str, decision: SelectionDecision) -> list[str]:
    probes = ";".join(
        f"{p.server}={'N/A' if p.rtt_ms is None else repr(float(p.rtt_ms))}"
        for p in decision.candidates
    )
    min_rtt = "N/A" if decision.min_rtt_ms is None else repr(float(decision.min_rtt_ms))
    return [timestamp, filename, decision.chosen, min_rtt,
            "true" if decision.fallback_used else "false", probes]


class Gateway:
    """Orchestration node in front of the origin servers.

    Args:
        servers: server node ids in topology order (index = tie-break rank).
        transport: a virtual or wall transport with the servers registered.
        coordination_ms: latency added to every probe, modelling per-request
            coordination across the server pool.
        cache_ttl_s: reuse a probe round for this long; ``None`` probes per request.
        on_decision: called with ``(timestamp, filename, decision)``.
    """

    def __init__(self, servers: Sequence[str], transport, *, name: str = "gateway",
                 rng: random.Random | None = None, coordination_ms: float = 0.0,
                 cache_ttl_s: float | None = None,
                 on_decision: Callable[[str, str, SelectionDecision], None] | None = None):
        self.servers = list(servers)
        self.transport = transport
        self.name = name
        self.rng = rng or random.Random(0)
        self.coordination_ms = coordination_ms
        self.cache_ttl_s = cache_ttl_s
        self.on_decision = on_decision
        self.decisions: list[tuple[str, str, SelectionDecision]] = []
        self._cache: tuple[float, list[ProbeResult]] | None = None

    @property
    def clock(self):
        return self.transport.clock

    def _result(self, server: str, rtt: float | None) -> ProbeResult:
        if rtt is not None:
            rtt += self.coordination_ms
        return ProbeResult(server, rtt, self.clock.timestamp())

    def ping_rtt(self, server: str) -> ProbeResult:
        if server not in self.servers:
            raise UnknownServerError(server)
        return self._result(server, self.transport.echo_rtt(self.name, server))

    def probe_all(self) -> list[ProbeResult]:
        """One consistent probe round over every server, in topology order."""
        return self._probe_round()[0]

    def _probe_round(self) -> tuple[list[ProbeResult], bool]:
        now = self.clock.now_ms
        if self.cache_ttl_s is not None and self._cache is not None:
            taken_at, results = self._cache
            if now - taken_at < self.cache_ttl_s * 1000.0:
                return results, False
        rtts = self.transport.probe_many(self.name, self.servers)
        results = [self._result(s, rtts[s]) for s in self.servers]
        self._cache = (now, results)
        return results, True

    def _probed(self):
        results, fresh = self._probe_round()
        if fresh:
            yield self.transport.probe_wait_s([r.rtt_ms for r in results])
        return results

    def _check(self, filename: str) -> None:
        if not filename:
            raise EmptyFilenameError("empty filename")
        if not self.servers:
            raise NoServersError("gateway has no servers")

    def _redirect(self, filename: str, results: list[ProbeResult]) -> Response:
        decision = select_server(results, self.rng)
        ts = self.clock.timestamp()
        self.decisions.append((ts, filename, decision))
        if self.on_decision is not None:
            self.on_decision(ts, filename, decision)
        logger.debug("%s -> %s (min %s ms, fallback=%s)", filename, decision.chosen,
                     decision.min_rtt_ms, decision.fallback_used)
        location = self.transport.base_url(decision.chosen) + "segment/" + filename
        return Response(302, b"", {"Location": location})

    def handle_request(self, filename: str) -> Response:
        """Probe, select and answer with a 302 to the chosen server."""
        self._check(filename)
        return self._redirect(filename, self.probe_all())

    def handle(self, path: str):
        path = strip_query(path)
        if path.startswith(("/cdn/", "/segment/")):
            filename = path.split("/", 2)[2]
            try:
                self._check(filename)
            except EmptyFilenameError:
                return Response(400, b"empty filename")
            except NoServersError:
                return Response(503, b"no servers")
            results = yield from self._probed()
            return self._redirect(filename, results)
        if path.startswith("/manifest/"):
            if not self.servers:
                return Response(503, b"no servers")
            results = yield from self._probed()
            decision = select_server(results, self.rng)
            url = self.transport.base_url(decision.chosen) + path.lstrip("/")
            try:
                upstream = yield from self.transport.request(self.name, url)
            except TransportError:
                return Response(502, b"upstream unreachable")
            headers = {k: v for k, v in upstream.headers.items() if k.lower() == "content-type"}
            return Response(upstream.status, upstream.body, headers)
        return Response(404, b"not found")
